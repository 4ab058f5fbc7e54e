//! Fermi-golden-rule coefficients by limiting absorption.
//!
//! The damping rate attached to a minimal resonant index m is the boundary
//! value of the resolvent quadratic form
//! Gamma_m = <i G_m, (H - m.omega - i0)^{-1} G_m> evaluated at the embedded
//! energy m.omega > 0, approximated on a ladder of imaginary offsets epsilon
//! and Richardson-extrapolated to epsilon -> 0. The genericity analysis
//! expresses Gamma_m as a quadratic polynomial in the top Taylor coefficient
//! of the nonlinearity.

use crate::error::{Error, Result};
use crate::indices::{enumerate_a, IndexTables, MultiIndex};
use crate::profile::{build_leading, NonlinearitySpec};
use crate::spectral::GridOperator;
use num_complex::Complex64;
use serde::Serialize;

/// Relative ladder jump above which the resonance is declared unresolved.
pub const TAU_LADDER: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct FgrCoefficient {
    pub m: MultiIndex,
    /// Embedded energy m . omega.
    pub lambda: f64,
    /// Extrapolated rate.
    pub gamma: f64,
    /// Rate at the finest ladder point, before extrapolation.
    pub gamma_raw: f64,
    /// (epsilon, Gamma(epsilon)) samples, epsilon decreasing.
    pub epsilon_ladder: Vec<(f64, f64)>,
}

/// Default ladder {0.2, 0.1, 0.05, 0.025} * min(lambda, 1), floored at
/// 50 h^2 to stay above the grid resolution.
pub fn default_eps_ladder(lambda: f64, h: f64) -> Vec<f64> {
    let scale = lambda.min(1.0);
    let floor = 50.0 * h * h;
    let mut out: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|f| (f * scale).max(floor))
        .collect();
    out.dedup();
    out
}

/// Symmetric resolvent pairing q(a, b; eps) =
/// h sum (P_c a) Im (H - lambda - i eps)^{-1} (P_c b) for real fields.
fn gamma_pairing(
    op: &GridOperator,
    a: &[f64],
    b: &[f64],
    lambda: f64,
    eps: f64,
) -> Result<f64> {
    let pa = op.project_continuous_real(a);
    let pb = op.project_continuous_real(b);
    let rhs: Vec<Complex64> = pb.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let u = op.resolvent_solve(Complex64::new(lambda, eps), &rhs)?;
    Ok(op.h() * pa.iter().zip(&u).map(|(&x, y)| x * y.im).sum::<f64>())
}

/// Gamma_m for a forcing field G_m at embedded energy lambda > 0.
pub fn compute_gamma(
    op: &GridOperator,
    m: &MultiIndex,
    g_m: &[f64],
    lambda: f64,
    eps_ladder: &[f64],
) -> Result<FgrCoefficient> {
    if lambda <= 0.0 {
        return Err(Error::NotEmbedded(lambda));
    }
    if eps_ladder.len() < 2 {
        return Err(Error::InvalidArgument(
            "epsilon ladder needs at least two points".into(),
        ));
    }
    for w in eps_ladder.windows(2) {
        if w[1] >= w[0] || w[1] <= 0.0 {
            return Err(Error::InvalidArgument(
                "epsilon ladder must be positive and strictly decreasing".into(),
            ));
        }
    }
    let mut ladder = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let gamma_eps = gamma_pairing(op, g_m, g_m, lambda, eps)?;
        if gamma_eps < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "resolvent positivity violated: Gamma({eps:e}) = {gamma_eps:e}"
            )));
        }
        ladder.push((eps, gamma_eps));
    }
    let (_, g_fine) = ladder[ladder.len() - 1];
    let (_, g_coarse) = ladder[ladder.len() - 2];
    let denom = g_fine.abs().max(1e-300);
    let jump = (g_fine - g_coarse).abs() / denom;
    if g_fine > 1e-14 && jump > TAU_LADDER {
        return Err(Error::UnresolvedResonance {
            index: m.entries().to_vec(),
            jump,
        });
    }
    // Two-point extrapolation assuming Gamma(eps) = Gamma_0 + c eps with the
    // final halving step.
    let (e1, v1) = ladder[ladder.len() - 2];
    let (e2, v2) = ladder[ladder.len() - 1];
    let gamma = v2 + (v2 - v1) * e2 / (e1 - e2);
    Ok(FgrCoefficient {
        m: m.clone(),
        lambda,
        gamma,
        gamma_raw: g_fine,
        epsilon_ladder: ladder,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FgrCheck {
    pub passed: bool,
    pub tau: f64,
    /// Indices whose rate failed to clear the threshold.
    pub marginal: Vec<(MultiIndex, f64)>,
}

/// True iff gamma > tau for every coefficient.
pub fn check_fgr_assumption(coeffs: &[FgrCoefficient], tau: f64) -> FgrCheck {
    let marginal: Vec<(MultiIndex, f64)> = coeffs
        .iter()
        .filter(|c| c.gamma <= tau)
        .map(|c| (c.m.clone(), c.gamma))
        .collect();
    FgrCheck {
        passed: marginal.is_empty(),
        tau,
        marginal,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenericityEntry {
    pub m: MultiIndex,
    /// L_m = (||m|| - 1) / 2.
    pub l_m: i64,
    /// Number of basis-index tuples realizing the leading term.
    pub n_m: usize,
    /// Gamma_m as a quadratic a x^2 + b x + c in x = g^(L_m)(0).
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Real roots excluded by the genericity condition (empty if none).
    pub excluded_roots: Vec<f64>,
}

impl GenericityEntry {
    pub fn gamma_at(&self, x: f64) -> f64 {
        self.a * x * x + self.b * x + self.c
    }
}

/// Expresses Gamma_m as a quadratic in the top Taylor coefficient
/// x = g^(L_m)(0), holding the strictly lower-order coefficients of `nl`
/// fixed. `tau_a` is the positivity threshold on the leading coefficient.
pub fn genericity_quadratic(
    op: &GridOperator,
    tables: &IndexTables,
    nl: &NonlinearitySpec,
    m: &MultiIndex,
    eps_ladder: &[f64],
    tau_a: f64,
) -> Result<GenericityEntry> {
    if !tables.r_min.contains(m) {
        return Err(Error::InvalidArgument(format!(
            "{:?} is not a minimal resonant index",
            m.entries()
        )));
    }
    let l_m = (m.weight() - 1) / 2;
    let omega = crate::indices::FrequencyVector::new(op.omegas.clone())?;
    let lambda = m.dot(&omega)?;

    // Leading term: tuples over the basis indices only.
    let tuples = enumerate_a(l_m as usize, m, &tables.nr0)?;
    let n_m = tuples.len();
    let mut phi_m = vec![0.0; op.n()];
    if let Some(t) = tuples.first() {
        phi_m = vec![1.0; op.n()];
        for e in t {
            let j = e
                .entries()
                .iter()
                .position(|&v| v == 1)
                .expect("basis tuple entry");
            for (p, &v) in phi_m.iter_mut().zip(&op.phis[j]) {
                *p *= v;
            }
        }
    }
    // u = (N_m / L_m!) phi^m carries the coefficient of x.
    let mut fact = 1.0f64;
    for i in 1..=l_m {
        fact *= i as f64;
    }
    let u: Vec<f64> = phi_m.iter().map(|&v| v * n_m as f64 / fact).collect();

    // K_m: the forcing with the top coefficient removed.
    let mut lower = nl.taylor.clone();
    lower.resize(l_m as usize, 0.0);
    if l_m >= 1 {
        lower[(l_m - 1) as usize] = 0.0;
    }
    let nl_lower = NonlinearitySpec::new(lower)?;
    let lead_lower = build_leading(op, &nl_lower, tables)?;
    let k_m = lead_lower.g_big[m].clone();

    // Quadratic coefficients from the bilinear pairing at each ladder point,
    // extrapolated like compute_gamma.
    let quad_at = |eps: f64| -> Result<(f64, f64, f64)> {
        let quu = gamma_pairing(op, &u, &u, lambda, eps)?;
        let quk = gamma_pairing(op, &u, &k_m, lambda, eps)?;
        let qku = gamma_pairing(op, &k_m, &u, lambda, eps)?;
        let qkk = gamma_pairing(op, &k_m, &k_m, lambda, eps)?;
        Ok((quu, quk + qku, qkk))
    };
    let (e1, e2) = (
        eps_ladder[eps_ladder.len() - 2],
        eps_ladder[eps_ladder.len() - 1],
    );
    let (a1, b1, c1) = quad_at(e1)?;
    let (a2, b2, c2) = quad_at(e2)?;
    let extrap = |v1: f64, v2: f64| v2 + (v2 - v1) * e2 / (e1 - e2);
    let (a, b, c) = (extrap(a1, a2), extrap(b1, b2), extrap(c1, c2));
    if a <= tau_a {
        return Err(Error::FgrSimplifiedFailure {
            index: m.entries().to_vec(),
            value: a,
        });
    }
    let disc = b * b - 4.0 * a * c;
    let excluded_roots = if disc >= 0.0 {
        let sq = disc.sqrt();
        let mut roots = vec![(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
        roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        roots.dedup_by(|x, y| (*x - *y).abs() < 1e-14 * (x.abs() + y.abs() + 1e-300));
        roots
    } else {
        Vec::new()
    };
    Ok(GenericityEntry {
        m: m.clone(),
        l_m,
        n_m,
        a,
        b,
        c,
        excluded_roots,
    })
}
