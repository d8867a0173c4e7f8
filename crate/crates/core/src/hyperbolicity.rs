//! Hyperbolicity certificates for periodic limit states and the limit
//! linear operator `(D zeta)_t = D_t zeta_t - N_t zeta_{t-1}` with
//! `D_t = 2 a xi_t + b xi_{t-1}` and `N_t = sigma1 - b xi_t - 2 c xi_{t-1}`.

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::relation::SlopeValue;
use crate::symbolic::AIState;

/// Band on `|P - 1|` inside which a slope product counts as one.
pub const DEGENERACY_BAND: f64 = 1e-8;

/// Relative floor for the direct coefficient tests: `1e-6 * (1 + |xi|_inf)`.
pub const DIRECT_MARGIN_RTOL: f64 = 1e-6;

/// Rate used for the direct certificates, where slope products are zero or infinite.
pub const DIRECT_LAMBDA: f64 = 2.0;

/// Relative pivot threshold for singular limit matrices.
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CertificateKind {
    Expanding,
    Contracting,
    DirectExpanding,
    DirectContracting,
    Degenerate,
    Inconclusive,
}

impl CertificateKind {
    pub fn is_hyperbolic(self) -> bool {
        !matches!(
            self,
            CertificateKind::Degenerate | CertificateKind::Inconclusive
        )
    }

    pub fn is_expanding(self) -> bool {
        matches!(
            self,
            CertificateKind::Expanding | CertificateKind::DirectExpanding
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            CertificateKind::Expanding => "Expanding",
            CertificateKind::Contracting => "Contracting",
            CertificateKind::DirectExpanding => "DirectExpanding",
            CertificateKind::DirectContracting => "DirectContracting",
            CertificateKind::Degenerate => "Degenerate",
            CertificateKind::Inconclusive => "Inconclusive",
        }
    }
}

/// `(C, lambda)` certificate with its `k1`-`chi` form and slope extremes.
///
/// For expanding kinds every cyclic window product of length `k` is at least
/// `C lambda^k`; for contracting kinds at most `C^-1 lambda^-k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperbolicityCertificate {
    pub kind: CertificateKind,
    #[serde(rename = "C")]
    pub c: f64,
    pub lambda: f64,
    pub k1: usize,
    pub chi: Option<f64>,
    #[serde(serialize_with = "finite_or_null")]
    pub m_min: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub m_max: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub margin: f64,
}

fn finite_or_null<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

/// `m_t = m(xi_t, xi_{t+1})` over one period.
pub fn slope_sequence(state: &AIState) -> Result<Vec<SlopeValue>> {
    let xi = &state.values;
    let n = xi.len();
    (0..n)
        .map(|t| state.coeffs.slope(xi[t], xi[(t + 1) % n]))
        .collect()
}

/// `D_t = 2 a xi_t + b xi_{t-1}`.
pub fn diagonal_coefficients(state: &AIState) -> Vec<f64> {
    let (xi, n) = (&state.values, state.values.len());
    (0..n)
        .map(|t| state.coeffs.slope_denominator(xi[(t + n - 1) % n], xi[t]))
        .collect()
}

/// `N_t = sigma1 - b xi_t - 2 c xi_{t-1}`.
pub fn offdiagonal_coefficients(state: &AIState) -> Vec<f64> {
    let (xi, n) = (&state.values, state.values.len());
    (0..n)
        .map(|t| state.coeffs.slope_numerator(xi[(t + n - 1) % n], xi[t]))
        .collect()
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Log of every cyclic window product `prod_{n<k} |m_{t+n}|`, `k = 1..=kmax`,
/// passed to `f(k, log_product)`.
fn for_each_window(logs: &[f64], kmax: usize, mut f: impl FnMut(usize, f64)) {
    let n = logs.len();
    for t in 0..n {
        let mut acc = 0.0;
        for k in 1..=kmax {
            acc += logs[(t + k - 1) % n];
            f(k, acc);
        }
    }
}

/// Cyclic window products of length `k` (plain, not logs).
fn window_products(abs_slopes: &[f64], k: usize) -> Vec<f64> {
    let n = abs_slopes.len();
    (0..n)
        .map(|t| (0..k).map(|j| abs_slopes[(t + j) % n]).product())
        .collect()
}

fn certificate_base(
    kind: CertificateKind,
    m_min: f64,
    m_max: f64,
    margin: f64,
) -> HyperbolicityCertificate {
    HyperbolicityCertificate {
        kind,
        c: 1.0,
        lambda: 1.0,
        k1: 1,
        chi: None,
        m_min,
        m_max,
        margin,
    }
}

/// Classifies a periodic state by its per-period slope product, falling back
/// to the direct coefficient tests when slopes vanish or are infinite.
pub fn certify(state: &AIState) -> HyperbolicityCertificate {
    let n = state.period();
    let slopes: Vec<SlopeValue> = {
        let xi = &state.values;
        (0..n)
            .map(|t| state.coeffs.slope_unchecked(xi[t], xi[(t + 1) % n]))
            .collect()
    };
    let abs: Vec<f64> = slopes.iter().map(|m| m.abs()).collect();
    let m_min = abs.iter().copied().fold(f64::INFINITY, f64::min);
    let m_max = abs.iter().copied().fold(0.0, f64::max);
    if slopes.contains(&SlopeValue::Undefined) {
        return certificate_base(CertificateKind::Inconclusive, m_min, m_max, 0.0);
    }
    let has_inf = slopes.contains(&SlopeValue::PlusInfinity);
    let has_zero = abs.contains(&0.0);
    if !has_inf && !has_zero {
        return certify_finite(&abs, m_min, m_max);
    }
    let floor = DIRECT_MARGIN_RTOL * (1.0 + sup_norm(&state.values));
    if has_zero && !has_inf {
        let margin = sup_norm_min(&diagonal_coefficients(state));
        if margin < floor {
            return certificate_base(CertificateKind::Inconclusive, m_min, m_max, margin);
        }
        direct_certificate(
            CertificateKind::DirectContracting,
            &abs,
            m_min,
            m_max,
            margin,
        )
    } else if has_inf && !has_zero {
        let margin = sup_norm_min(&offdiagonal_coefficients(state));
        if margin < floor {
            return certificate_base(CertificateKind::Inconclusive, m_min, m_max, margin);
        }
        direct_certificate(CertificateKind::DirectExpanding, &abs, m_min, m_max, margin)
    } else {
        certificate_base(CertificateKind::Inconclusive, m_min, m_max, 0.0)
    }
}

fn sup_norm_min(x: &[f64]) -> f64 {
    x.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

fn certify_finite(abs: &[f64], m_min: f64, m_max: f64) -> HyperbolicityCertificate {
    let n = abs.len();
    let logs: Vec<f64> = abs.iter().map(|m| m.ln()).collect();
    let log_p: f64 = logs.iter().sum();
    let margin = log_p.exp_m1().abs();
    if margin <= DEGENERACY_BAND {
        return certificate_base(CertificateKind::Degenerate, m_min, m_max, margin);
    }
    let expanding = log_p > 0.0;
    let log_lambda = log_p.abs() / n as f64;
    // C = min_k prod / lambda^k (expanding) or 1 / max_k prod lambda^k (contracting)
    let mut extreme = if expanding {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    for_each_window(&logs, n, |k, acc| {
        if expanding {
            extreme = extreme.min(acc - k as f64 * log_lambda);
        } else {
            extreme = extreme.max(acc + k as f64 * log_lambda);
        }
    });
    let c = if expanding {
        extreme.exp()
    } else {
        (-extreme).exp()
    };
    let (k1, chi) = first_window(abs, expanding);
    HyperbolicityCertificate {
        kind: if expanding {
            CertificateKind::Expanding
        } else {
            CertificateKind::Contracting
        },
        c,
        lambda: log_lambda.exp(),
        k1,
        chi: Some(chi),
        m_min,
        m_max,
        margin,
    }
}

/// Smallest window length whose products are all above one (expanding) or
/// below one (contracting), with the corresponding `chi`.
fn first_window(abs: &[f64], expanding: bool) -> (usize, f64) {
    let n = abs.len();
    for k in 1..=n {
        let w = window_products(abs, k);
        if expanding {
            let min = w.iter().copied().fold(f64::INFINITY, f64::min);
            if min > 1.0 {
                return (k, min - 1.0);
            }
        } else {
            let max = w.iter().copied().fold(0.0, f64::max);
            if max < 1.0 {
                return (k, 1.0 - max);
            }
        }
    }
    // unreachable for a non-degenerate product, kept total
    (n, 0.0)
}

fn direct_certificate(
    kind: CertificateKind,
    abs: &[f64],
    m_min: f64,
    m_max: f64,
    margin: f64,
) -> HyperbolicityCertificate {
    let n = abs.len();
    let expanding = kind == CertificateKind::DirectExpanding;
    let log_lambda = DIRECT_LAMBDA.ln();
    let logs: Vec<f64> = abs.iter().map(|m| m.ln()).collect();
    let mut extreme = 0.0f64;
    for_each_window(&logs, n, |k, acc| {
        if expanding {
            extreme = extreme.min(acc - k as f64 * log_lambda);
        } else {
            extreme = extreme.max(acc + k as f64 * log_lambda);
        }
    });
    let c = if expanding {
        extreme.exp()
    } else {
        (-extreme).exp()
    };
    HyperbolicityCertificate {
        kind,
        c,
        lambda: DIRECT_LAMBDA,
        k1: 1,
        chi: None,
        m_min,
        m_max,
        margin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WindowForm {
    Expanding,
    Contracting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct K1ChiCertificate {
    pub chi: f64,
    pub ok: bool,
    /// Form that succeeded, if any.
    pub form: Option<WindowForm>,
}

/// Checks that every cyclic `k1`-window slope product is `>= 1 + chi` or
/// `<= 1 - chi` with `chi` above the degeneracy band.
pub fn k1_chi_certificate(state: &AIState, k1: usize) -> Result<K1ChiCertificate> {
    if k1 == 0 {
        return Err(Error::InvalidInput("k1 must be positive".into()));
    }
    let abs = finite_abs_slopes(state)?;
    let w = window_products(&abs, k1);
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let max = w.iter().copied().fold(0.0, f64::max);
    if min - 1.0 >= DEGENERACY_BAND {
        Ok(K1ChiCertificate {
            chi: min - 1.0,
            ok: true,
            form: Some(WindowForm::Expanding),
        })
    } else if 1.0 - max >= DEGENERACY_BAND {
        Ok(K1ChiCertificate {
            chi: 1.0 - max,
            ok: true,
            form: Some(WindowForm::Contracting),
        })
    } else {
        Ok(K1ChiCertificate {
            chi: (min - 1.0).max(1.0 - max),
            ok: false,
            form: None,
        })
    }
}

fn finite_abs_slopes(state: &AIState) -> Result<Vec<f64>> {
    let xi = &state.values;
    let n = xi.len();
    (0..n)
        .map(
            |t| match state.coeffs.slope_unchecked(xi[t], xi[(t + 1) % n]) {
                SlopeValue::Finite(m) if m != 0.0 => Ok(m.abs()),
                _ => Err(Error::InfiniteOrZeroSlope { index: t }),
            },
        )
        .collect()
}

/// `(C, lambda)` implied by a `k1`-`chi` certificate. `m_extreme` is the
/// smallest `|m|` (expanding) or the largest `|m|` (contracting) on the orbit.
///
/// `C` is capped at one: windows whose length is a multiple of `k1` only
/// guarantee the factor `(1 + chi)^(k/k1)`.
pub fn chi_to_c_lambda(
    k1: usize,
    chi: f64,
    m_extreme: f64,
    form: WindowForm,
) -> Result<(f64, f64)> {
    if k1 == 0 || !(chi > 0.0) || !(m_extreme > 0.0) {
        return Err(Error::InvalidInput(
            "need k1 >= 1, chi > 0 and m_extreme > 0".into(),
        ));
    }
    let e = (k1 - 1) as f64;
    let k = k1 as f64;
    match form {
        WindowForm::Expanding => {
            let lambda = (1.0 + chi).powf(1.0 / k);
            let c = (m_extreme.powf(e) / (1.0 + chi).powf(e / k)).min(1.0);
            Ok((c, lambda))
        }
        WindowForm::Contracting => {
            if chi >= 1.0 {
                return Err(Error::InvalidInput("contracting form needs chi < 1".into()));
            }
            let lambda = (1.0 - chi).powf(-1.0 / k);
            let c_inv = (m_extreme.powf(e) / (1.0 - chi).powf(e / k)).max(1.0);
            Ok((1.0 / c_inv, lambda))
        }
    }
}

/// Checks the window inequalities of `cert` for lengths `1..=kmax`.
pub fn windows_satisfy(state: &AIState, cert: &HyperbolicityCertificate, kmax: usize) -> bool {
    let n = state.period();
    let xi = &state.values;
    let abs: Vec<f64> = (0..n)
        .map(|t| state.coeffs.slope_unchecked(xi[t], xi[(t + 1) % n]).abs())
        .collect();
    let logs: Vec<f64> = abs.iter().map(|m| m.ln()).collect();
    let (log_c, log_l) = (cert.c.ln(), cert.lambda.ln());
    let slack = 1e-12;
    let mut ok = true;
    for_each_window(&logs, kmax, |k, acc| {
        let kf = k as f64;
        let holds = if cert.kind.is_expanding() {
            acc >= log_c + kf * log_l - slack * (1.0 + kf)
        } else {
            acc <= -log_c - kf * log_l + slack * (1.0 + kf)
        };
        ok &= holds || acc.is_nan();
    });
    ok
}

/// Truncated series solution of the rescaled limit linear equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitLinearSolve {
    pub zeta: Vec<f64>,
    pub eta: Vec<f64>,
    pub series_terms: usize,
    pub truncation_error_bound: f64,
    /// Sup-norm residual of the rescaled equation at `zeta`.
    pub residual: f64,
}

/// Solves the rescaled equation by its geometric series.
///
/// Contracting kinds: `zeta_t - m_{t-1} zeta_{t-1} = eta_t` (rows divided by `D_t`).
/// Expanding kinds: `zeta_{t-1} - zeta_t / m_{t-1} = -eta_t` (rows divided by `N_t`).
pub fn solve_limit_linear(state: &AIState, eta: &[f64], terms: usize) -> Result<LimitLinearSolve> {
    let n = state.period();
    if eta.len() != n {
        return Err(Error::InvalidInput(format!(
            "eta has length {}, period is {n}",
            eta.len()
        )));
    }
    let cert = certify(state);
    if !cert.kind.is_hyperbolic() {
        return Err(Error::NotHyperbolic {
            kind: cert.kind.name().to_string(),
        });
    }
    let xi = &state.values;
    let slopes: Vec<SlopeValue> = (0..n)
        .map(|t| state.coeffs.slope_unchecked(xi[t], xi[(t + 1) % n]))
        .collect();
    let at = |i: isize| -> usize { i.rem_euclid(n as isize) as usize };
    let mut zeta = vec![0.0; n];
    let residual;
    if cert.kind.is_expanding() {
        // multipliers 1 / m (zero for infinite slopes)
        let inv: Vec<f64> = slopes
            .iter()
            .map(|m| match m {
                SlopeValue::Finite(m) => 1.0 / m,
                _ => 0.0,
            })
            .collect();
        for t in 0..n {
            // zeta_{t-1} = -eta_t - sum_k (prod_{j<=k} inv_{t-1+j}) eta_{t+1+k}
            let ti = t as isize;
            let mut acc = -eta[t];
            let mut prod = 1.0;
            for k in 0..terms {
                prod *= inv[at(ti - 1 + k as isize)];
                if prod == 0.0 {
                    break;
                }
                acc -= prod * eta[at(ti + 1 + k as isize)];
            }
            zeta[at(ti - 1)] = acc;
        }
        residual = (0..n)
            .map(|t| (zeta[at(t as isize - 1)] - inv[at(t as isize - 1)] * zeta[t] + eta[t]).abs())
            .fold(0.0, f64::max);
    } else {
        let m: Vec<f64> = slopes.iter().map(|s| s.finite().unwrap_or(0.0)).collect();
        for t in 0..n {
            // zeta_t = eta_t + sum_k (prod_{j<=k} m_{t-1-j}) eta_{t-1-k}
            let ti = t as isize;
            let mut acc = eta[t];
            let mut prod = 1.0;
            for k in 0..terms {
                prod *= m[at(ti - 1 - k as isize)];
                if prod == 0.0 {
                    break;
                }
                acc += prod * eta[at(ti - 1 - k as isize)];
            }
            zeta[t] = acc;
        }
        residual = (0..n)
            .map(|t| (zeta[t] - m[at(t as isize - 1)] * zeta[at(t as isize - 1)] - eta[t]).abs())
            .fold(0.0, f64::max);
    }
    let truncation_error_bound = sup_norm(eta) / cert.c
        * cert.lambda.powi(-(terms.min(i32::MAX as usize) as i32))
        / (cert.lambda - 1.0);
    Ok(LimitLinearSolve {
        zeta,
        eta: eta.to_vec(),
        series_terms: terms,
        truncation_error_bound,
        residual,
    })
}

/// Number of series terms needed for a truncation bound of at most `target`
/// relative to `|eta|_inf`.
pub fn terms_for_bound(cert: &HyperbolicityCertificate, target: f64) -> usize {
    // C^-1 lambda^-k / (lambda - 1) <= target
    let need = ((1.0 / (cert.c * target * (cert.lambda - 1.0))).ln() / cert.lambda.ln()).ceil();
    if need.is_finite() && need > 0.0 {
        need as usize
    } else {
        0
    }
}

/// Dense cyclic matrix of the limit linear operator, row `t`:
/// `D_t` on the diagonal and `-N_t` at column `t - 1` (summed when `N = 1`).
pub fn limit_matrix(state: &AIState) -> DMatrix<f64> {
    let n = state.period();
    let d = diagonal_coefficients(state);
    let nn = offdiagonal_coefficients(state);
    let mut m = DMatrix::zeros(n, n);
    for t in 0..n {
        m[(t, t)] += d[t];
        m[(t, (t + n - 1) % n)] -= nn[t];
    }
    m
}

fn checked_lu(m: DMatrix<f64>) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let scale = m.amax();
    let lu = m.lu();
    let min_pivot = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |a, d| a.min(d.abs()));
    let pivot_ratio = if scale > 0.0 { min_pivot / scale } else { 0.0 };
    if !(pivot_ratio > SINGULAR_PIVOT_RTOL) {
        return Err(Error::SingularMatrix { pivot_ratio });
    }
    Ok(lu)
}

/// Dense solve of the limit linear operator with right-hand side `rhs`.
pub fn dense_limit_solve(state: &AIState, rhs: &[f64]) -> Result<Vec<f64>> {
    let lu = checked_lu(limit_matrix(state))?;
    let x = lu
        .solve(&DVector::from_column_slice(rhs))
        .ok_or(Error::SingularMatrix { pivot_ratio: 0.0 })?;
    Ok(x.iter().copied().collect())
}

/// Converts a rescaled right-hand side into the one of [`limit_matrix`]:
/// `D_t eta_t` for contracting kinds, `N_t eta_t` for expanding kinds.
pub fn unscaled_rhs(state: &AIState, kind: CertificateKind, eta: &[f64]) -> Vec<f64> {
    let coef = if kind.is_expanding() {
        offdiagonal_coefficients(state)
    } else {
        diagonal_coefficients(state)
    };
    coef.iter().zip(eta).map(|(c, e)| c * e).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseNormCheck {
    pub computed_norm: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Compares the dense inverse infinity norm of [`limit_matrix`] with
/// `1 + C^-1 (lambda - 1)^-1`.
pub fn inverse_norm_bound_check(state: &AIState) -> Result<InverseNormCheck> {
    let n = state.period();
    let lu = checked_lu(limit_matrix(state))?;
    let cert = certify(state);
    if !cert.kind.is_hyperbolic() {
        return Err(Error::NotHyperbolic {
            kind: cert.kind.name().to_string(),
        });
    }
    let inv = lu
        .try_inverse()
        .ok_or(Error::SingularMatrix { pivot_ratio: 0.0 })?;
    let computed_norm = (0..n)
        .map(|r| inv.row(r).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let bound = 1.0 + 1.0 / (cert.c * (cert.lambda - 1.0));
    Ok(InverseNormCheck {
        computed_norm,
        bound,
        ok: computed_norm <= bound * (1.0 + 1e-9),
    })
}
