//! Continuation of limit states to `epsilon > 0`.
//!
//! The scaled recurrence on a periodic lattice is
//! `L(xi; e)_t = A - eps xi_{t+1} - S xi_{t-1} + D xi_{t-2} + a xi_t^2 + b xi_t xi_{t-1} + c xi_{t-1}^2`
//! with `A = eps^2 alpha`, `S = eps sigma`, `D = eps delta` given by the
//! parameter scheme.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hyperbolicity::{certify, HyperbolicityCertificate};
use crate::map3d::{self, MapParams, MonodromySpectrum, State3};
use crate::relation::RelationCoeffs;
use crate::symbolic::AIState;

/// Relative pivot threshold below which a Jacobian is reported singular.
pub const SINGULAR_JACOBIAN_RTOL: f64 = 1e-12;

/// Size above which dense solves are followed by iterative refinement.
pub const REFINEMENT_THRESHOLD: usize = 512;

/// Smallest homotopy step, as a fraction of the parameter path.
pub const MIN_HOMOTOPY_STEP: f64 = 1e-12;

/// How the limit products depend on `epsilon`:
/// `eps^2 alpha = alpha1 + alpha_drift eps`, `eps sigma = sigma1 + sigma_drift eps`,
/// `eps delta = delta1 + delta eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamScheme {
    pub delta: f64,
    #[serde(default)]
    pub alpha_drift: f64,
    #[serde(default)]
    pub sigma_drift: f64,
}

impl ParamScheme {
    /// `alpha = alpha1 / eps^2`, `sigma = sigma1 / eps`, constant `delta`.
    pub fn constant_delta(delta: f64) -> Self {
        ParamScheme {
            delta,
            alpha_drift: 0.0,
            sigma_drift: 0.0,
        }
    }
}

impl Default for ParamScheme {
    fn default() -> Self {
        ParamScheme::constant_delta(0.0)
    }
}

/// Full parameter point `e = (eps, alpha1, sigma1, delta1, a, c)` with a scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullParams {
    pub epsilon: f64,
    pub alpha1: f64,
    pub sigma1: f64,
    pub delta1: f64,
    pub a: f64,
    pub c: f64,
    pub scheme: ParamScheme,
}

impl FullParams {
    pub fn new(epsilon: f64, coeffs: &RelationCoeffs, scheme: ParamScheme) -> Self {
        FullParams {
            epsilon,
            alpha1: coeffs.alpha1(),
            sigma1: coeffs.sigma1(),
            delta1: 0.0,
            a: coeffs.a(),
            c: coeffs.c(),
            scheme,
        }
    }

    pub fn b(&self) -> f64 {
        1.0 - self.a - self.c
    }

    pub fn limit_coeffs(&self) -> RelationCoeffs {
        RelationCoeffs::new(self.alpha1, self.sigma1, self.a, self.c)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        FullParams { epsilon, ..*self }
    }

    /// `eps^2 alpha`
    pub fn eps2_alpha(&self) -> f64 {
        self.alpha1 + self.scheme.alpha_drift * self.epsilon
    }

    /// `eps sigma`
    pub fn eps_sigma(&self) -> f64 {
        self.sigma1 + self.scheme.sigma_drift * self.epsilon
    }

    /// `eps delta`
    pub fn eps_delta(&self) -> f64 {
        self.delta1 + self.scheme.delta * self.epsilon
    }

    /// Parameters of the 3D map; only defined for `eps > 0`.
    pub fn map_params(&self) -> Result<MapParams> {
        if !(self.epsilon > 0.0) {
            return Err(Error::ZeroEpsilon);
        }
        let e = self.epsilon;
        MapParams::new(
            self.eps2_alpha() / (e * e),
            self.eps_sigma() / e,
            self.eps_delta() / e,
            self.a,
            self.b(),
            self.c,
        )
    }

    /// Componentwise linear interpolation (the scheme is kept from `self`).
    fn lerp(&self, other: &FullParams, tau: f64) -> FullParams {
        let l = |x: f64, y: f64| x + tau * (y - x);
        FullParams {
            epsilon: l(self.epsilon, other.epsilon),
            alpha1: l(self.alpha1, other.alpha1),
            sigma1: l(self.sigma1, other.sigma1),
            delta1: l(self.delta1, other.delta1),
            a: l(self.a, other.a),
            c: l(self.c, other.c),
            scheme: self.scheme,
        }
    }
}

impl Serialize for FullParams {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("FullParams", 8)?;
        st.serialize_field("epsilon", &self.epsilon)?;
        st.serialize_field("alpha1", &self.alpha1)?;
        st.serialize_field("sigma1", &self.sigma1)?;
        st.serialize_field("delta1", &self.delta1)?;
        st.serialize_field("a", &self.a)?;
        st.serialize_field("b", &self.b())?;
        st.serialize_field("c", &self.c)?;
        st.serialize_field("scheme", &self.scheme)?;
        st.end()
    }
}

/// `L(xi; e)_t` over one period.
pub fn residual(xi: &[f64], e: &FullParams) -> Vec<f64> {
    let n = xi.len();
    let (eps, aa, ss, dd) = (e.epsilon, e.eps2_alpha(), e.eps_sigma(), e.eps_delta());
    let (a, b, c) = (e.a, e.b(), e.c);
    (0..n)
        .map(|t| {
            let x = xi[t];
            let next = xi[(t + 1) % n];
            let p1 = xi[(t + n - 1) % n];
            let p2 = xi[(t + 2 * n - 2) % n];
            aa - eps * next - ss * p1 + dd * p2 + a * x * x + b * x * p1 + c * p1 * p1
        })
        .collect()
}

pub fn residual_norm(xi: &[f64], e: &FullParams) -> f64 {
    sup_norm(&residual(xi, e))
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Dense cyclic Jacobian of [`residual`]; bands at offsets `+1, 0, -1, -2`
/// add up when the period is too short to separate them.
pub fn jacobian(xi: &[f64], e: &FullParams) -> DMatrix<f64> {
    let n = xi.len();
    let (eps, ss, dd) = (e.epsilon, e.eps_sigma(), e.eps_delta());
    let (a, b, c) = (e.a, e.b(), e.c);
    let mut m = DMatrix::zeros(n, n);
    for t in 0..n {
        let x = xi[t];
        let p1 = xi[(t + n - 1) % n];
        m[(t, (t + 1) % n)] += -eps;
        m[(t, t)] += 2.0 * a * x + b * p1;
        m[(t, (t + n - 1) % n)] += -ss + b * x + 2.0 * c * p1;
        m[(t, (t + 2 * n - 2) % n)] += dd;
    }
    m
}

/// LU solve with a pivot check; refines iteratively for large systems.
fn solve_jacobian(j: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let scale = j.amax();
    let lu = j.clone().lu();
    let min_pivot = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, d| m.min(d.abs()));
    let pivot_ratio = if scale > 0.0 { min_pivot / scale } else { 0.0 };
    if !(pivot_ratio > SINGULAR_JACOBIAN_RTOL) {
        return Err(Error::SingularJacobian { pivot_ratio });
    }
    let b = DVector::from_column_slice(rhs);
    let mut x = lu
        .solve(&b)
        .ok_or(Error::SingularJacobian { pivot_ratio })?;
    if n > REFINEMENT_THRESHOLD {
        for _ in 0..2 {
            let r = &b - j * &x;
            if let Some(dx) = lu.solve(&r) {
                x += dx;
            }
        }
    }
    Ok(x.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonConfig {
    /// Target sup-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Updates longer than this (sup-norm) are shortened to it.
    pub step_cap: f64,
    /// Updates longer than this abort with `StepTooLarge`.
    pub divergence_cap: f64,
    pub max_halvings: usize,
    /// Largest admissible sup-distance from the seed; a correction that
    /// wanders further has left the solution branch of the seed.
    pub max_drift: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-12,
            max_iter: 50,
            step_cap: 1.0,
            divergence_cap: 1e6,
            max_halvings: 30,
            max_drift: 0.5,
        }
    }
}

/// A periodic solution of the full recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSolution {
    pub params: FullParams,
    pub xi: Vec<f64>,
    pub residual: f64,
    pub newton_iters: usize,
    /// `(xi_t, xi_{t-1}, xi_{t-2}) / eps`; empty at `eps = 0`.
    pub projected: Vec<State3>,
    pub monodromy: Option<MonodromySpectrum>,
    /// Certificate of the limit state the solution was continued from.
    pub certificate: Option<HyperbolicityCertificate>,
}

impl OrbitSolution {
    pub fn period(&self) -> usize {
        self.xi.len()
    }

    /// Cyclic residual of the projected orbit under the 3D map.
    pub fn orbit_residual(&self) -> Result<f64> {
        let p = self.params.map_params()?;
        Ok(map3d::orbit_residual(&p, &self.projected, true))
    }

    /// True when every per-step monodromy modulus avoids `[1 - band, 1 + band]`.
    pub fn band_ok(&self, band: f64) -> bool {
        self.monodromy
            .as_ref()
            .is_some_and(|m| m.outside_band(band))
    }
}

impl Serialize for OrbitSolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let orbit: Vec<[f64; 3]> = self.projected.iter().map(|p| p.as_array()).collect();
        let eig = self
            .monodromy
            .as_ref()
            .map(|m| m.eigenvalues.to_vec())
            .unwrap_or_default();
        let monodromy: Vec<Option<[f64; 2]>> = eig
            .iter()
            .map(|e| {
                let z = e.value();
                (z.re.is_finite() && z.im.is_finite()).then_some([z.re, z.im])
            })
            .collect();
        let log_modulus: Vec<f64> = eig.iter().map(|e| e.log_modulus).collect();
        let per_step: Vec<f64> = self
            .monodromy
            .as_ref()
            .map(|m| m.per_step_moduli().to_vec())
            .unwrap_or_default();
        let mut st = s.serialize_struct("OrbitSolution", 11)?;
        st.serialize_field("params", &self.params)?;
        st.serialize_field("period", &self.period())?;
        st.serialize_field("xi", &self.xi)?;
        st.serialize_field("residual", &self.residual)?;
        st.serialize_field("newton_iters", &self.newton_iters)?;
        st.serialize_field("orbit", &orbit)?;
        st.serialize_field("monodromy", &monodromy)?;
        st.serialize_field("monodromy_log_modulus", &log_modulus)?;
        st.serialize_field("monodromy_per_step_modulus", &per_step)?;
        st.serialize_field("certificate", &self.certificate)?;
        st.end()
    }
}

/// `(xi_t, xi_{t-1}, xi_{t-2}) / eps` for one period.
pub fn project(xi: &[f64], epsilon: f64) -> Result<Vec<State3>> {
    if !(epsilon > 0.0) {
        return Err(Error::ZeroEpsilon);
    }
    let n = xi.len();
    Ok((0..n)
        .map(|t| {
            State3::new(
                xi[t] / epsilon,
                xi[(t + n - 1) % n] / epsilon,
                xi[(t + 2 * n - 2) % n] / epsilon,
            )
        })
        .collect())
}

pub fn project_to_orbit(sol: &OrbitSolution) -> Result<Vec<State3>> {
    project(&sol.xi, sol.params.epsilon)
}

/// Fills the projection and monodromy of a solution at `eps > 0`.
fn finish(
    params: FullParams,
    xi: Vec<f64>,
    residual: f64,
    newton_iters: usize,
) -> Result<OrbitSolution> {
    let mut sol = OrbitSolution {
        params,
        xi,
        residual,
        newton_iters,
        projected: Vec::new(),
        monodromy: None,
        certificate: None,
    };
    if params.epsilon > 0.0 {
        sol.projected = project_to_orbit(&sol)?;
        let p = params.map_params()?;
        sol.monodromy = Some(map3d::monodromy_spectrum(&p, &sol.projected)?);
    }
    Ok(sol)
}

/// Damped Newton iteration on the cyclic system, without projection.
fn newton_raw(xi0: &[f64], e: &FullParams, cfg: &NewtonConfig) -> Result<(Vec<f64>, f64, usize)> {
    if xi0.is_empty() {
        return Err(Error::InvalidInput("empty sequence".into()));
    }
    let mut xi = xi0.to_vec();
    let mut r = residual(&xi, e);
    let mut rn = sup_norm(&r);
    let mut iters = 0;
    while !(rn <= cfg.tol) {
        if iters == cfg.max_iter {
            return Err(Error::NoConvergence {
                iterations: iters,
                last_change: rn,
                contraction: f64::NAN,
            });
        }
        let j = jacobian(&xi, e);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut dx = solve_jacobian(&j, &rhs)?;
        let norm = sup_norm(&dx);
        if !(norm <= cfg.divergence_cap) {
            return Err(Error::StepTooLarge {
                norm,
                cap: cfg.divergence_cap,
            });
        }
        if norm > cfg.step_cap {
            let f = cfg.step_cap / norm;
            dx.iter_mut().for_each(|d| *d *= f);
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = xi.iter().zip(&dx).map(|(x, d)| x + t * d).collect();
            let tr = residual(&trial, e);
            let tn = sup_norm(&tr);
            if tn < rn {
                xi = trial;
                r = tr;
                rn = tn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iters += 1;
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: iters,
                last_change: rn,
                contraction: f64::NAN,
            });
        }
        let drift = xi
            .iter()
            .zip(xi0)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if drift > cfg.max_drift {
            return Err(Error::NoConvergence {
                iterations: iters,
                last_change: drift,
                contraction: f64::NAN,
            });
        }
    }
    Ok((xi, rn, iters))
}

/// Damped Newton correction of `xi0` at parameters `e`. Projection and
/// monodromy are filled when `eps > 0`.
pub fn newton_correct(xi0: &[f64], e: &FullParams, cfg: &NewtonConfig) -> Result<OrbitSolution> {
    let (xi, res, iters) = newton_raw(xi0, e, cfg)?;
    finish(*e, xi, res, iters)
}

/// Homotopy from the limit point of `target` (`eps = 0`, same coefficients)
/// to `target`, starting from `steps` uniform steps with adaptive halving.
pub fn continue_in_epsilon(
    state: &AIState,
    target: &FullParams,
    steps: usize,
    cfg: &NewtonConfig,
) -> Result<OrbitSolution> {
    if target.delta1 != 0.0 {
        return Err(Error::InvalidInput(
            "continuation with delta1 != 0 is not supported".into(),
        ));
    }
    if !(target.epsilon >= 0.0) {
        return Err(Error::InvalidInput(
            "target epsilon must be non-negative".into(),
        ));
    }
    let start = FullParams {
        epsilon: 0.0,
        alpha1: state.coeffs.alpha1(),
        sigma1: state.coeffs.sigma1(),
        delta1: 0.0,
        a: state.coeffs.a(),
        c: state.coeffs.c(),
        scheme: target.scheme,
    };
    let certificate = Some(certify(state));
    if *target == start {
        let res = residual_norm(&state.values, &start);
        let mut sol = finish(start, state.values.clone(), res, 0)?;
        sol.certificate = certificate;
        return Ok(sol);
    }
    // the limit Jacobian must be invertible for the branch to continue
    let j0 = jacobian(&state.values, &start);
    let zero = vec![0.0; state.period()];
    solve_jacobian(&j0, &zero)?;
    let (mut xi, _, mut total_iters) = newton_raw(&state.values, &start, cfg)?;

    let h_init = 1.0 / steps.max(1) as f64;
    let mut h = h_init;
    let mut tau = 0.0;
    let mut successes = 0;
    let mut last_res = 0.0;
    let at = |tau: f64| start.lerp(target, tau);
    // the residual is affine in tau, so its tau-derivative is a difference
    let d_tau = |xi: &[f64]| -> Vec<f64> {
        let r1 = residual(xi, target);
        let r0 = residual(xi, &start);
        r1.iter().zip(&r0).map(|(a, b)| a - b).collect()
    };
    let mut tangent = {
        let rhs: Vec<f64> = d_tau(&xi).iter().map(|v| -v).collect();
        solve_jacobian(&jacobian(&xi, &at(tau)), &rhs)?
    };
    while tau < 1.0 {
        h = h.min(1.0 - tau);
        let seed: Vec<f64> = xi.iter().zip(&tangent).map(|(x, d)| x + h * d).collect();
        let next = at(if tau + h >= 1.0 { 1.0 } else { tau + h });
        match newton_raw(&seed, &next, cfg) {
            Ok((sol, res, it)) => {
                xi = sol;
                last_res = res;
                total_iters += it;
                tau = if tau + h >= 1.0 { 1.0 } else { tau + h };
                successes += 1;
                if successes >= 2 {
                    h = (2.0 * h).min(h_init);
                    successes = 0;
                }
                if tau < 1.0 {
                    let rhs: Vec<f64> = d_tau(&xi).iter().map(|v| -v).collect();
                    tangent = solve_jacobian(&jacobian(&xi, &at(tau)), &rhs)?;
                }
            }
            Err(Error::InvalidInput(m)) => return Err(Error::InvalidInput(m)),
            Err(_) => {
                h *= 0.5;
                successes = 0;
                if h < MIN_HOMOTOPY_STEP {
                    return Err(Error::StepUnderflow {
                        epsilon: at(tau).epsilon,
                        step: h * (target.epsilon - start.epsilon).abs(),
                    });
                }
            }
        }
    }
    let mut sol = finish(*target, xi, last_res, total_iters)?;
    sol.certificate = certificate;
    Ok(sol)
}

/// Continues many states concurrently; results keep the input order.
pub fn continue_batch(
    states: &[AIState],
    target: &FullParams,
    steps: usize,
    cfg: &NewtonConfig,
) -> Vec<Result<OrbitSolution>> {
    states
        .par_iter()
        .map(|s| continue_in_epsilon(s, target, steps, cfg))
        .collect()
}

/// Largest deviation `|L(P_t) - P'_t|` between the image of the continued
/// orbit `P` and the continued orbit `P'` of the shifted state.
pub fn verify_conjugacy(
    state: &AIState,
    target: &FullParams,
    steps: usize,
    cfg: &NewtonConfig,
) -> Result<f64> {
    if !(target.epsilon > 0.0) {
        return Err(Error::ZeroEpsilon);
    }
    let shifted = state.rotate(1);
    let (a, b) = rayon::join(
        || continue_in_epsilon(state, target, steps, cfg),
        || continue_in_epsilon(&shifted, target, steps, cfg),
    );
    let (a, b) = (a?, b?);
    let p = target.map_params()?;
    Ok(a.projected
        .iter()
        .zip(&b.projected)
        .map(|(x, y)| map3d::step(&p, *x).sup_dist(y))
        .fold(0.0, f64::max))
}

/// Sup-norm defect of the projected orbit under the 3D map. It equals
/// `|L(xi; e)|_inf / eps^2` up to rounding.
pub fn map_defect(sol: &OrbitSolution) -> Result<f64> {
    sol.orbit_residual()
}

/// Real solutions of period 1 or 2 of the full recurrence, in closed form.
///
/// Period 1 returns constant sequences. Period 2 returns the period-1
/// solutions as constant pairs followed by one representative `[p, q]`
/// (`p > q`) per genuine period-2 orbit.
pub fn small_period_solutions(e: &FullParams, period: usize) -> Result<Vec<Vec<f64>>> {
    let (eps, aa, ss, dd) = (e.epsilon, e.eps2_alpha(), e.eps_sigma(), e.eps_delta());
    let (a, b, c) = (e.a, e.b(), e.c);
    // (a + b + c) x^2 - (eps + S - D) x + A = 0
    let fixed = real_quadratic_roots(1.0, -(eps + ss - dd), aa);
    match period {
        1 => Ok(fixed.into_iter().map(|x| vec![x]).collect()),
        2 => {
            let mut out: Vec<Vec<f64>> = fixed.iter().map(|&x| vec![x, x]).collect();
            // E1 - E2 = (p - q) [eps + S + D + (a - c)(p + q)]
            let lin = eps + ss + dd;
            let scale = 1.0 + eps.abs() + ss.abs() + dd.abs();
            if (a - c).abs() <= 1e-14 * (1.0 + a.abs() + c.abs()) {
                if lin.abs() <= 1e-14 * scale {
                    return Err(Error::DegenerateElimination(
                        "a = c and eps + eps*sigma + eps*delta = 0: the difference equation vanishes identically"
                            .into(),
                    ));
                }
                return Ok(out);
            }
            let s = -lin / (a - c);
            // E1 + E2 with p^2 + q^2 = s^2 - 2P, pq = P
            let coef_p = 2.0 * b - 2.0 * (a + c);
            let rest = 2.0 * aa - (eps + ss - dd) * s + (a + c) * s * s;
            if coef_p.abs() <= 1e-14 * (1.0 + b.abs() + (a + c).abs()) {
                if rest.abs() <= 1e-12 * (1.0 + aa.abs() + s * s) {
                    return Err(Error::DegenerateElimination(
                        "b = a + c and the sum equation holds identically".into(),
                    ));
                }
                return Ok(out);
            }
            let prod = -rest / coef_p;
            let roots = real_quadratic_roots(1.0, -s, prod);
            if let [p, q] = roots[..] {
                if (p - q).abs() > 1e-12 * (1.0 + p.abs()) {
                    out.push(vec![p.max(q), p.min(q)]);
                }
            }
            Ok(out)
        }
        _ => Err(Error::InvalidInput(format!(
            "period {period} is not 1 or 2"
        ))),
    }
}

/// Real roots of `a x^2 + b x + c` (a != 0), ascending; a double root once.
fn real_quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    if disc == 0.0 {
        return vec![-b / (2.0 * a)];
    }
    let sq = disc.sqrt();
    // avoid cancellation
    let q = -0.5 * (b + b.signum() * sq);
    let (x1, x2) = if q == 0.0 {
        let r = sq / (2.0 * a);
        (-r, r)
    } else {
        (q / a, c / q)
    };
    let (lo, hi) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    vec![lo, hi]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{closed_form_states, ClosedFormCase, Construction};

    fn full_shift(eps: f64, delta: f64) -> FullParams {
        FullParams::new(
            eps,
            &RelationCoeffs::new(-1.0, 0.0, 1.0, 0.0),
            ParamScheme::constant_delta(delta),
        )
    }

    #[test]
    fn residual_examples() {
        let e = full_shift(0.1, 0.0);
        let x = (0.1 + 4.01f64.sqrt()) / 2.0;
        assert!(residual_norm(&[x, x, x], &e) < 1e-14);
        assert!(residual(&[0.0; 3], &e).iter().all(|&r| r == -1.0));
    }

    #[test]
    fn residual_at_zero_epsilon_is_limit_operator() {
        let coeffs = RelationCoeffs::new(-0.7, 0.3, 0.6, 0.15);
        let e = FullParams::new(0.0, &coeffs, ParamScheme::constant_delta(0.4));
        let xi = [0.3, -1.1, 0.8, 2.0, -0.4];
        let r = residual(&xi, &e);
        let l = coeffs.limit_residual(&xi);
        for (x, y) in r.iter().zip(&l) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn period_one_jacobian_collapses() {
        let coeffs = RelationCoeffs::new(-1.0, 0.0, 0.9, 0.1);
        let e = FullParams::new(0.0, &coeffs, ParamScheme::default());
        let j = jacobian(&[1.0], &e);
        assert!((j[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn newton_examples() {
        let e = full_shift(0.1, 0.0);
        let sol = newton_correct(&[1.0], &e, &NewtonConfig::default()).unwrap();
        let x = (0.1 + 4.01f64.sqrt()) / 2.0;
        assert!((sol.xi[0] - x).abs() < 1e-12);
        assert!((sol.xi[0] - 1.0512492).abs() < 1e-7);
        let p = sol.projected[0];
        assert!((p.x - 10.512492).abs() < 1e-6 && p.x == p.y && p.y == p.z);
        assert!(sol.orbit_residual().unwrap() < 1e-9);

        let at_limit = full_shift(0.0, 0.3);
        let sol = newton_correct(&[1.0, -1.0], &at_limit, &NewtonConfig::default()).unwrap();
        assert!(sol.newton_iters <= 1 && sol.projected.is_empty());
    }

    #[test]
    fn degenerate_seed_does_not_converge() {
        let coeffs = RelationCoeffs::new(-1.0, 0.0, 0.0, 0.0);
        for eps in [0.01, 0.05, 0.1] {
            let e = FullParams::new(eps, &coeffs, ParamScheme::constant_delta(1.0));
            let r = newton_correct(&[2.0, 0.5], &e, &NewtonConfig::default());
            assert!(
                matches!(
                    r,
                    Err(Error::SingularJacobian { .. }) | Err(Error::NoConvergence { .. })
                ),
                "eps = {eps}: {r:?}"
            );
        }
    }

    #[test]
    fn projection() {
        let sol = newton_correct(&[1.0], &full_shift(0.1, 0.0), &NewtonConfig::default()).unwrap();
        assert_eq!(project_to_orbit(&sol).unwrap(), sol.projected);
        let half = project(&sol.xi, 0.2).unwrap();
        assert!((half[0].x - 0.5 * sol.projected[0].x).abs() < 1e-12);
        assert_eq!(project(&[1.0], 0.0), Err(Error::ZeroEpsilon));
        let xi = [0.3, -0.2, 0.9, 1.4];
        let pts = project(&xi, 0.5).unwrap();
        for t in 0..4 {
            let nx = pts[(t + 1) % 4];
            assert_eq!((nx.y, nx.z), (pts[t].x, pts[t].y));
        }
    }

    #[test]
    fn zero_target_returns_state() {
        let s = &closed_form_states(ClosedFormCase::SquareOne, 2).unwrap()[1];
        let sol =
            continue_in_epsilon(s, &full_shift(0.0, 0.3), 5, &NewtonConfig::default()).unwrap();
        assert_eq!(sol.xi, s.values);
        assert_eq!(sol.newton_iters, 0);
    }

    #[test]
    fn continuation_of_full_shift_word() {
        let s = &closed_form_states(ClosedFormCase::SquareOne, 4).unwrap()[5];
        let e = full_shift(0.05, 0.3);
        let sol = continue_in_epsilon(s, &e, 5, &NewtonConfig::default()).unwrap();
        assert!(sol.residual < 1e-10);
        assert!(sol.orbit_residual().unwrap() < 1e-8);
        assert!(sol.band_ok(map3d::DEFAULT_BAND));
        let m = sol.monodromy.as_ref().unwrap();
        assert!((m.log_determinant() - 4.0 * 0.3f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn degenerate_state_fails_to_continue() {
        let coeffs = RelationCoeffs::new(-1.0, 0.0, 0.0, 0.0);
        let s = AIState::from_values(
            coeffs,
            vec![2.0, 0.5],
            None,
            Construction::ClosedForm,
            1e-12,
        )
        .unwrap();
        let e = FullParams::new(0.05, &coeffs, ParamScheme::constant_delta(1.0));
        let r = continue_in_epsilon(&s, &e, 5, &NewtonConfig::default());
        assert!(matches!(r, Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn conjugacy_of_period_one_is_exact() {
        let s = &closed_form_states(ClosedFormCase::SquareOne, 1).unwrap()[0];
        let d = verify_conjugacy(s, &full_shift(0.05, 0.3), 5, &NewtonConfig::default()).unwrap();
        assert!(d < 1e-9);
    }

    #[test]
    fn small_periods() {
        let e = FullParams::new(
            0.1,
            &RelationCoeffs::new(-1.0, 0.0, 1.0, 0.0),
            ParamScheme::default(),
        );
        let s = small_period_solutions(&e, 1).unwrap();
        let r = (0.01f64 + 4.0).sqrt();
        assert!((s[0][0] - (0.1 - r) / 2.0).abs() < 1e-15);
        assert!((s[1][0] - (0.1 + r) / 2.0).abs() < 1e-15);

        let degenerate = RelationCoeffs::new(-1.0, 0.0, 0.0, 0.0);
        for k in 1..=9 {
            let e = FullParams::new(
                0.1 * k as f64,
                &degenerate,
                ParamScheme::constant_delta(1.0),
            );
            let s = small_period_solutions(&e, 2).unwrap();
            assert_eq!(s, vec![vec![-1.0, -1.0], vec![1.0, 1.0]]);
        }
        assert!(small_period_solutions(&e, 3).is_err());
    }

    #[test]
    fn period_two_solutions_solve_the_recurrence() {
        let e = FullParams::new(
            0.3,
            &RelationCoeffs::new(-1.0, 0.2, 0.7, 0.1),
            ParamScheme::constant_delta(0.5),
        );
        let sols = small_period_solutions(&e, 2).unwrap();
        assert!(sols.iter().any(|s| s[0] != s[1]));
        for s in sols {
            assert!(residual_norm(&s, &e) < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn params_json_includes_b() {
        let v = serde_json::to_value(full_shift(0.05, 0.3)).unwrap();
        assert_eq!(v["b"], 0.0);
        assert_eq!(v["scheme"]["delta"], 0.3);
    }
}
