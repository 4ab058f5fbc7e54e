//! Refined standing-wave profiles.
//!
//! The ansatz phi(z) = z . phi + sum_{m in NR1} z^m psi_m(|z|^2) solves the
//! stationary problem up to a forcing supported on the minimal resonant
//! monomials plus a higher-order remainder. This module builds the leading
//! coefficients of the recursion at z = 0 (including the forcing vectors
//! G_m), solves the coefficient fixed point at a given |z|^2, and verifies
//! the forced equation residual.
//!
//! For a polynomial nonlinearity the expansion of g(|phi|^2) phi in the mode
//! monomials is finite and is assembled exactly: the squared modulus splits
//! into a diagonal part S(x) (a function of |z|^2 only) and off-diagonal
//! monomial terms, and the Taylor expansion of g around S terminates at the
//! polynomial degree.

use crate::error::{Error, Result};
use crate::indices::{
    abs_power, enumerate_a, monomial_eval, monomial_product_exponent, IndexTables, MultiIndex,
};
use crate::spectral::{inner_real, norm_real, GridOperator, WeightedNorm};
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Fixed-point residual target.
pub const TAU_FP: f64 = 1e-12;
pub const MAX_ITER: usize = 200;
/// Base-point drift beyond which cached coefficients are rejected.
pub const TAU_STALE: f64 = 1e-5;

/// Polynomial nonlinearity g(s) = sum_{k>=1} c_k s^k; `taylor[k-1] = c_k`
/// is the k-th Taylor coefficient g^(k)(0)/k!. The missing constant term
/// enforces g(0) = 0 structurally.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    pub taylor: Vec<f64>,
}

impl NonlinearitySpec {
    pub fn new(taylor: Vec<f64>) -> Result<Self> {
        if taylor.is_empty() {
            return Err(Error::InvalidArgument(
                "nonlinearity needs at least one Taylor coefficient".into(),
            ));
        }
        if taylor.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "nonlinearity coefficients must be finite".into(),
            ));
        }
        Ok(Self { taylor })
    }

    pub fn degree(&self) -> usize {
        self.taylor.len()
    }

    /// The degree must reach L = max_{r_min} (||m|| - 1)/2 so every minimal
    /// resonant monomial receives a leading coefficient.
    pub fn validate_for(&self, tables: &IndexTables) -> Result<()> {
        let l = tables.max_resonance_order();
        if (self.degree() as i64) < l {
            return Err(Error::InvalidArgument(format!(
                "nonlinearity degree {} is below the resonance order {l}",
                self.degree()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        // Horner on c_1 + c_2 s + ... times s.
        let mut acc = 0.0;
        for &c in self.taylor.iter().rev() {
            acc = acc * s + c;
        }
        acc * s
    }

    /// g^(k)(s)/k! = sum_j c_j C(j, k) s^(j-k).
    pub fn scaled_derivative(&self, k: usize, s: f64) -> f64 {
        let deg = self.taylor.len();
        if k > deg {
            return 0.0;
        }
        let jmin = k.max(1);
        let mut acc = 0.0;
        for j in (jmin..=deg).rev() {
            acc = acc * s + self.taylor[j - 1] * binomial(j, k);
        }
        if k == 0 {
            acc *= s;
        }
        acc
    }

    /// Antiderivative G(s) with G(0) = 0.
    pub fn antiderivative(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for (idx, &c) in self.taylor.iter().enumerate().rev() {
            let j = idx + 1;
            acc = acc * s + c / (j + 1) as f64;
        }
        acc * s * s
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut out = 1.0f64;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Leading coefficients of the recursion at z = 0.
#[derive(Debug, Clone)]
pub struct LeadingCoefficients {
    /// phi_tilde_m(0) for m in NR1 (phi_j itself for the basis indices).
    pub phi_tilde0: BTreeMap<MultiIndex, Vec<f64>>,
    /// g_m(0) for m in NR1 (zero for the basis indices).
    pub g0: BTreeMap<MultiIndex, Vec<f64>>,
    /// Forcing vectors G_m for m in R_min.
    pub g_big: BTreeMap<MultiIndex, Vec<f64>>,
}

impl LeadingCoefficients {
    pub fn nr1(&self) -> Vec<MultiIndex> {
        self.phi_tilde0.keys().cloned().collect()
    }

    pub fn r_min(&self) -> Vec<MultiIndex> {
        self.g_big.keys().cloned().collect()
    }

    /// phi_tilde_m(0) minus the z . phi part: zero for basis indices, the
    /// full leading coefficient otherwise.
    pub fn excess0(&self, m: &MultiIndex) -> Option<Vec<f64>> {
        if is_basis(m).is_some() {
            Some(vec![0.0; self.phi_tilde0[m].len()])
        } else {
            self.phi_tilde0.get(m).cloned()
        }
    }
}

fn is_basis(m: &MultiIndex) -> Option<usize> {
    let mut j = None;
    for (i, &v) in m.entries().iter().enumerate() {
        match v {
            0 => {}
            1 if j.is_none() => j = Some(i),
            _ => return None,
        }
    }
    j
}

/// Evaluates the z = 0 recursion for the leading coefficients and the
/// forcing vectors G_m.
pub fn build_leading(
    op: &GridOperator,
    nl: &NonlinearitySpec,
    tables: &IndexTables,
) -> Result<LeadingCoefficients> {
    nl.validate_for(tables)?;
    let omega = crate::indices::FrequencyVector::new(op.omegas.clone())?;
    if omega.len() != tables.mode_count() {
        return Err(Error::DimensionMismatch {
            expected: tables.mode_count(),
            got: omega.len(),
        });
    }
    let n = op.n();
    let mut phi_tilde0: BTreeMap<MultiIndex, Vec<f64>> = BTreeMap::new();
    let mut g0: BTreeMap<MultiIndex, Vec<f64>> = BTreeMap::new();
    for (j, phi) in op.phis.iter().enumerate().take(tables.mode_count()) {
        phi_tilde0.insert(MultiIndex::basis(tables.mode_count(), j), phi.clone());
        g0.insert(MultiIndex::basis(tables.mode_count(), j), vec![0.0; n]);
    }

    // g_m(0) = sum_k g^(k)(0)/k! sum_{A(k,m)} prod phi_tilde(0); every tuple
    // entry has strictly smaller weight than m, so increasing-weight order
    // makes the recursion well-founded.
    let eval_g0 = |m: &MultiIndex,
                       phi_tilde0: &BTreeMap<MultiIndex, Vec<f64>>|
     -> Result<Vec<f64>> {
        let mut total = vec![0.0; n];
        let k_max = ((m.weight() - 1) / 2).min(nl.degree() as i64);
        for k in 1..=k_max {
            let ck = nl.taylor[(k - 1) as usize];
            if ck == 0.0 {
                continue;
            }
            for tuple in enumerate_a(k as usize, m, &tables.nr1)? {
                let mut prod = vec![ck; n];
                for entry in &tuple {
                    debug_assert!(entry.weight() < m.weight());
                    let f = phi_tilde0
                        .get(entry)
                        .ok_or_else(|| Error::InvalidArgument(format!(
                            "recursion order violated at {entry:?}"
                        )))?;
                    for (p, &v) in prod.iter_mut().zip(f) {
                        *p *= v;
                    }
                }
                for (t, p) in total.iter_mut().zip(&prod) {
                    *t += p;
                }
            }
        }
        Ok(total)
    };

    let mut nr1_sorted = tables.nr1.clone();
    nr1_sorted.sort_by_key(|m| (m.weight(), m.clone()));
    for m in &nr1_sorted {
        if is_basis(m).is_some() {
            continue;
        }
        let g = eval_g0(m, &phi_tilde0)?;
        let shift = m.dot(&omega)?;
        let neg_g: Vec<f64> = g.iter().map(|&v| -v).collect();
        let phi = op.resolvent_solve_real(shift, &neg_g)?;
        g0.insert(m.clone(), g);
        phi_tilde0.insert(m.clone(), phi);
    }

    let mut g_big = BTreeMap::new();
    for m in &tables.r_min {
        g_big.insert(m.clone(), eval_g0(m, &phi_tilde0)?);
    }
    Ok(LeadingCoefficients {
        phi_tilde0,
        g0,
        g_big,
    })
}

/// Profile coefficients at a fixed |z|^2. `psi` stores the deviation of each
/// coefficient from its z = 0 leading value, so psi_m(0) = 0 for every m.
#[derive(Debug, Clone)]
pub struct ProfileCoefficients {
    pub z2: Vec<f64>,
    pub psi: BTreeMap<MultiIndex, Vec<f64>>,
    pub varpi: Vec<f64>,
    /// Order beyond which an analytic nonlinearity could be truncated; kept
    /// for reporting (the polynomial expansion here is exact).
    pub truncation_m: i64,
    pub iterations: usize,
    pub residual: f64,
}

impl ProfileCoefficients {
    pub fn check_base_point(&self, z2: &[f64]) -> Result<()> {
        let drift = self
            .z2
            .iter()
            .zip(z2)
            .fold(0.0f64, |acc, (&a, &b)| acc.max((a - b).abs()));
        if drift > TAU_STALE {
            return Err(Error::StaleCoefficients { drift });
        }
        Ok(())
    }
}

/// Full coefficient fields phi_tilde_m(|z|^2) from leading values plus the
/// solved deviations.
pub fn totals(
    lead: &LeadingCoefficients,
    coeffs: &ProfileCoefficients,
) -> BTreeMap<MultiIndex, Vec<f64>> {
    let mut out = BTreeMap::new();
    for (m, base) in &lead.phi_tilde0 {
        let psi = &coeffs.psi[m];
        out.insert(
            m.clone(),
            base.iter().zip(psi).map(|(&a, &b)| a + b).collect(),
        );
    }
    out
}

/// One term of the finite monomial expansion of g(|phi|^2) phi.
struct GAssembly<'a> {
    nl: &'a NonlinearitySpec,
    nr1: Vec<MultiIndex>,
    z2: Vec<f64>,
}

impl<'a> GAssembly<'a> {
    /// Collects the coefficient fields g_m(|z|^2, {phi_tilde}) for every
    /// target index reachable by the expansion, restricted to `targets`.
    fn collect(
        &self,
        totals: &BTreeMap<MultiIndex, Vec<f64>>,
        targets: &[MultiIndex],
    ) -> BTreeMap<MultiIndex, Vec<f64>> {
        let n = totals.values().next().map_or(0, |v| v.len());
        // Diagonal part S(x) = sum_n |z^n|^2 phi_tilde_n(x)^2.
        let mut s_field = vec![0.0; n];
        for m in &self.nr1 {
            let w: f64 = abs_power(
                &self.z2,
                &m.abs().iter().map(|&v| 2 * v).collect::<Vec<_>>(),
            );
            if w == 0.0 {
                continue;
            }
            let f = &totals[m];
            for (s, &v) in s_field.iter_mut().zip(f) {
                *s += w * v * v;
            }
        }
        // g^(k)(S)/k! fields for k = 0..=K.
        let kmax = self.nl.degree();
        let gk_fields: Vec<Vec<f64>> = (0..=kmax)
            .map(|k| {
                s_field
                    .iter()
                    .map(|&s| {
                        if k == 0 {
                            self.nl.eval(s)
                        } else {
                            self.nl.scaled_derivative(k, s)
                        }
                    })
                    .collect()
            })
            .collect();

        let mut buckets: BTreeMap<MultiIndex, Vec<f64>> =
            targets.iter().map(|m| (m.clone(), vec![0.0; n])).collect();

        // Ordered k-tuples of distinct pairs (n1, n2), n1 != n2, times m3.
        let pairs: Vec<(MultiIndex, MultiIndex)> = self
            .nr1
            .iter()
            .flat_map(|a| {
                self.nr1
                    .iter()
                    .filter(move |b| *b != a)
                    .map(move |b| (a.clone(), b.clone()))
            })
            .collect();
        let dim = self.z2.len();
        for k in 0..=kmax {
            let mut tuple = vec![0usize; k];
            loop {
                for m3 in &self.nr1 {
                    // Accumulate the resulting index and the deficit vector.
                    let mut exponent = m3.clone();
                    let mut deficit = vec![0i64; dim];
                    for &pi in &tuple {
                        let (a, b) = &pairs[pi];
                        let neg_b = MultiIndex::new(b.entries().iter().map(|&v| -v).collect());
                        let (d1, p) = monomial_product_exponent(a, &neg_b).unwrap();
                        let (d2, e) = monomial_product_exponent(&exponent, &p).unwrap();
                        exponent = e;
                        for ((dd, &x), &y) in deficit.iter_mut().zip(&d1).zip(&d2) {
                            *dd += x + y;
                        }
                    }
                    let bucket = match buckets.get_mut(&exponent) {
                        Some(b) => b,
                        None => continue,
                    };
                    let w = abs_power(&self.z2, &deficit);
                    if w == 0.0 {
                        continue;
                    }
                    // w * g^(k)(S)/k! * prod(T_{n1} T_{n2}) * T_{m3}.
                    let mut term: Vec<f64> =
                        gk_fields[k].iter().map(|&v| v * w).collect();
                    for &pi in &tuple {
                        let (a, b) = &pairs[pi];
                        let fa = &totals[a];
                        let fb = &totals[b];
                        for ((t, &x), &y) in term.iter_mut().zip(fa).zip(fb) {
                            *t *= x * y;
                        }
                    }
                    let f3 = &totals[m3];
                    for (acc, (t, &x)) in bucket.iter_mut().zip(term.iter().zip(f3)) {
                        *acc += t * x;
                    }
                }
                // Advance the multi-radix tuple counter.
                let mut pos = 0;
                loop {
                    if pos == k {
                        break;
                    }
                    tuple[pos] += 1;
                    if tuple[pos] < pairs.len() {
                        break;
                    }
                    tuple[pos] = 0;
                    pos += 1;
                }
                if pos == k {
                    break;
                }
            }
        }
        buckets
    }
}

/// Smallest M with omega_1 + M * (minimal frequency gap) > 0.
pub fn truncation_order(omegas: &[f64]) -> i64 {
    let mut min_gap = f64::INFINITY;
    for w in omegas.windows(2) {
        min_gap = min_gap.min(w[1] - w[0]);
    }
    let mut m = 1i64;
    while omegas[0] + m as f64 * min_gap <= 0.0 {
        m += 1;
    }
    m
}

/// Solves the coefficient system at the base point `z2` (entrywise |z_j|^2)
/// by damped Picard iteration on the full coefficient fields.
pub fn solve_profile(
    op: &GridOperator,
    nl: &NonlinearitySpec,
    tables: &IndexTables,
    lead: &LeadingCoefficients,
    z2: &[f64],
) -> Result<ProfileCoefficients> {
    let dim = tables.mode_count();
    if z2.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: z2.len(),
        });
    }
    if z2.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "squared moduli must be finite and nonnegative".into(),
        ));
    }
    let omega = &op.omegas[..dim];
    let h = op.h();
    let assembly = GAssembly {
        nl,
        nr1: tables.nr1.clone(),
        z2: z2.to_vec(),
    };

    let mut totals_map: BTreeMap<MultiIndex, Vec<f64>> = lead.phi_tilde0.clone();
    let mut varpi: Vec<f64> = omega.to_vec();
    let targets = tables.nr1.clone();
    let mut damping = 1.0f64;
    let mut last_residual = f64::INFINITY;
    for iter in 0..MAX_ITER {
        let g = assembly.collect(&totals_map, &targets);
        // Frequency update from the basis components.
        let mut new_varpi = varpi.clone();
        for j in 0..dim {
            let ej = MultiIndex::basis(dim, j);
            new_varpi[j] = omega[j] + inner_real(h, &g[&ej], &op.phis[j]);
        }
        // Coefficient updates.
        let mut new_totals = totals_map.clone();
        let mut residual = 0.0f64;
        for m in &targets {
            let shift: f64 = m
                .entries()
                .iter()
                .zip(&new_varpi)
                .map(|(&a, &b)| a as f64 * b)
                .sum();
            let updated = if let Some(j) = is_basis(m) {
                // (H - omega_j) psi = (varpi_j - omega_j) psi - P_perp g.
                let phi_j = &op.phis[j];
                let cur_psi: Vec<f64> = totals_map[m]
                    .iter()
                    .zip(phi_j)
                    .map(|(&a, &b)| a - b)
                    .collect();
                let rhs: Vec<f64> = cur_psi
                    .iter()
                    .zip(&g[m])
                    .map(|(&p, &gm)| (new_varpi[j] - omega[j]) * p - gm)
                    .collect();
                let psi = op.restricted_solve(j, &rhs)?;
                psi.iter().zip(phi_j).map(|(&a, &b)| a + b).collect()
            } else {
                // phi_tilde_m = -(H - varpi . m)^{-1} g_m.
                let neg_g: Vec<f64> = g[m].iter().map(|&v| -v).collect();
                op.resolvent_solve_real(shift, &neg_g)?
            };
            let diff: Vec<f64> = updated
                .iter()
                .zip(&totals_map[m])
                .map(|(&a, &b)| a - b)
                .collect();
            residual = residual.max(norm_real(h, &diff));
            let damped: Vec<f64> = totals_map[m]
                .iter()
                .zip(&updated)
                .map(|(&old, &new)| old + damping * (new - old))
                .collect();
            new_totals.insert(m.clone(), damped);
        }
        let varpi_diff = new_varpi
            .iter()
            .zip(&varpi)
            .fold(0.0f64, |acc, (&a, &b)| acc.max((a - b).abs()));
        residual = residual.max(varpi_diff);
        for j in 0..dim {
            varpi[j] += damping * (new_varpi[j] - varpi[j]);
        }
        totals_map = new_totals;
        if residual <= TAU_FP {
            let mut psi = BTreeMap::new();
            for m in &targets {
                let base = if let Some(j) = is_basis(m) {
                    op.phis[j].clone()
                } else {
                    lead.phi_tilde0[m].clone()
                };
                psi.insert(
                    m.clone(),
                    totals_map[m]
                        .iter()
                        .zip(&base)
                        .map(|(&a, &b)| a - b)
                        .collect::<Vec<f64>>(),
                );
            }
            return Ok(ProfileCoefficients {
                z2: z2.to_vec(),
                psi,
                varpi,
                truncation_m: truncation_order(omega),
                iterations: iter + 1,
                residual,
            });
        }
        if residual > 2.0 * last_residual {
            damping = (damping * 0.5).max(0.05);
        }
        last_residual = residual;
    }
    Err(Error::ProfileRadiusExceeded {
        max_iter: MAX_ITER,
        residual: last_residual,
    })
}

/// phi(z) = z . phi + sum_{NR1} z^m (phi_tilde_m(0) - delta_basis + psi_m).
pub fn eval_profile(
    op: &GridOperator,
    lead: &LeadingCoefficients,
    coeffs: &ProfileCoefficients,
    z: &[Complex64],
) -> Result<Vec<Complex64>> {
    let z2: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
    coeffs.check_base_point(&z2)?;
    let n = op.n();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (j, phi) in op.phis.iter().enumerate().take(z.len()) {
        for (o, &p) in out.iter_mut().zip(phi) {
            *o += z[j] * p;
        }
    }
    for (m, psi) in &coeffs.psi {
        let zm = monomial_eval(z, m)?;
        let base = lead.excess0(m).ok_or_else(|| {
            Error::InvalidArgument(format!("missing leading coefficient for {m:?}"))
        })?;
        if zm == Complex64::new(0.0, 0.0) {
            continue;
        }
        for ((o, &b), &p) in out.iter_mut().zip(&base).zip(psi) {
            *o += zm * (b + p);
        }
    }
    Ok(out)
}

/// Residual of the forced equation: `raw` is the defect of phi(z) as a
/// stationary-ansatz solution, `after_g` adds back the resonant forcing
/// sum_{R_min} z^m G_m. Returns the two fields and their weighted norms
/// (s = 0 and s = 1, unweighted).
pub struct ForcedResidual {
    pub raw: Vec<Complex64>,
    pub after_g: Vec<Complex64>,
    pub raw_norms: [f64; 2],
    pub after_g_norms: [f64; 2],
}

pub fn forced_residual(
    op: &GridOperator,
    nl: &NonlinearitySpec,
    lead: &LeadingCoefficients,
    coeffs: &ProfileCoefficients,
    z: &[Complex64],
) -> Result<ForcedResidual> {
    let z2: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
    coeffs.check_base_point(&z2)?;
    let n = op.n();
    let phi_z = eval_profile(op, lead, coeffs, z)?;
    let h_phi = op.apply(&phi_z);
    let tmap = totals(lead, coeffs);

    // i d/dt phi(z) under z_j(t) = e^{-i varpi_j t} z_j equals
    // sum_m (varpi . m) z^m phi_tilde_m.
    let mut raw = vec![Complex64::new(0.0, 0.0); n];
    for (m, total) in &tmap {
        let zm = monomial_eval(z, m)?;
        if zm == Complex64::new(0.0, 0.0) {
            continue;
        }
        let freq: f64 = m
            .entries()
            .iter()
            .zip(&coeffs.varpi)
            .map(|(&a, &b)| a as f64 * b)
            .sum();
        for (r, &t) in raw.iter_mut().zip(total) {
            *r += zm * freq * t;
        }
    }
    for i in 0..n {
        let s = phi_z[i].norm_sqr();
        raw[i] -= h_phi[i] + nl.eval(s) * phi_z[i];
    }

    let mut after_g = raw.clone();
    for (m, big_g) in &lead.g_big {
        let zm = monomial_eval(z, m)?;
        for (r, &gv) in after_g.iter_mut().zip(big_g) {
            *r += zm * gv;
        }
    }
    let norms = |f: &[Complex64]| {
        [
            op.weighted_norm(f, WeightedNorm { gamma0: 0.0, s: 0 }),
            op.weighted_norm(f, WeightedNorm { gamma0: 0.0, s: 1 }),
        ]
    };
    Ok(ForcedResidual {
        raw_norms: norms(&raw),
        after_g_norms: norms(&after_g),
        raw,
        after_g,
    })
}

/// The part of g(|phi|^2) phi falling on the minimal resonant monomials at
/// the solved state; used by the remainder diagnostics.
pub fn resonant_g(
    nl: &NonlinearitySpec,
    tables: &IndexTables,
    lead: &LeadingCoefficients,
    coeffs: &ProfileCoefficients,
) -> BTreeMap<MultiIndex, Vec<f64>> {
    let assembly = GAssembly {
        nl,
        nr1: tables.nr1.clone(),
        z2: coeffs.z2.clone(),
    };
    assembly.collect(&totals(lead, coeffs), &tables.r_min)
}
