//! Integer combinatorics of resonant and non-resonant multi-indices.
//!
//! A multi-index `m` in Z^N labels the monomial `z^(m)` (negative entries act
//! on the conjugate). Indices with entry sum 1 split into resonant ones,
//! whose frequency `m . omega` is positive and therefore embedded in the
//! continuous spectrum, and non-resonant ones. The minimal resonant indices
//! and the non-resonant indices they do not dominate are both finite and are
//! enumerated here exactly, in integer arithmetic; floating point enters only
//! through the dot products with `omega`.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::Serialize;

/// Relative tolerance for the non-resonance witness check.
pub const TAU_NONRES: f64 = 1e-9;

/// Integer multi-index m in Z^N.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct MultiIndex {
    entries: Vec<i64>,
}

impl MultiIndex {
    pub fn new(entries: Vec<i64>) -> Self {
        Self { entries }
    }

    /// Standard basis index e_j (0-based j).
    pub fn basis(len: usize, j: usize) -> Self {
        let mut entries = vec![0; len];
        entries[j] = 1;
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    /// Signed entry sum.
    pub fn degree_sum(&self) -> i64 {
        self.entries.iter().sum()
    }

    /// Entrywise absolute value |m|.
    pub fn abs(&self) -> Vec<i64> {
        self.entries.iter().map(|v| v.abs()).collect()
    }

    /// l1 weight ||m|| = sum |m_j|.
    pub fn weight(&self) -> i64 {
        self.entries.iter().map(|v| v.abs()).sum()
    }

    pub fn dot(&self, omega: &FrequencyVector) -> Result<f64> {
        if self.len() != omega.len() {
            return Err(Error::DimensionMismatch {
                expected: omega.len(),
                got: self.len(),
            });
        }
        Ok(self
            .entries
            .iter()
            .zip(omega.omegas())
            .map(|(&m, &w)| m as f64 * w)
            .sum())
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex::new(
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

/// Strict entrywise partial order a < b on nonnegative vectors:
/// every component of `a` is <= the corresponding component of `b`
/// and the vectors differ.
pub fn abs_strictly_dominated(a: &[i64], b: &[i64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a != b
}

/// Ordered eigenvalues omega_1 < ... < omega_N < 0 of the linear operator.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector {
    omegas: Vec<f64>,
}

impl FrequencyVector {
    pub fn new(omegas: Vec<f64>) -> Result<Self> {
        if omegas.len() < 2 {
            return Err(Error::InvalidFrequencies(format!(
                "need at least 2 modes, got {}",
                omegas.len()
            )));
        }
        for w in &omegas {
            if !w.is_finite() || *w >= 0.0 {
                return Err(Error::InvalidFrequencies(format!(
                    "all frequencies must be finite and negative, got {w}"
                )));
            }
        }
        for pair in omegas.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::InvalidFrequencies(format!(
                    "frequencies must be strictly increasing: {} >= {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self { omegas })
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn max_abs(&self) -> f64 {
        self.omegas.iter().fold(0.0, |acc, w| acc.max(w.abs()))
    }
}

/// Classification of a multi-index with entry sum 1 relative to omega.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IndexClass {
    /// Entry sum 1 and m . omega < 0.
    NonResonant,
    /// Entry sum 1 and m . omega > 0: the frequency is embedded.
    Resonant,
    /// Entry sum differs from 1.
    OffShell,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexClassification {
    pub class: IndexClass,
    /// The frequency m . omega.
    pub value: f64,
}

pub fn classify(m: &MultiIndex, omega: &FrequencyVector) -> Result<IndexClassification> {
    let value = m.dot(omega)?;
    let class = if m.degree_sum() != 1 {
        IndexClass::OffShell
    } else if value > 0.0 {
        IndexClass::Resonant
    } else {
        IndexClass::NonResonant
    };
    Ok(IndexClassification { class, value })
}

/// Smallest integer n with n (omega_k - omega_j) + omega_k > 0, together with
/// the resonant index having -n at slot j and n+1 at slot k (0-based j < k).
pub fn pair_bound(j: usize, k: usize, omega: &FrequencyVector) -> Result<(i64, MultiIndex)> {
    if j >= k || k >= omega.len() {
        return Err(Error::InvalidArgument(format!(
            "pair_bound requires j < k < N, got j={j}, k={k}, N={}",
            omega.len()
        )));
    }
    let wj = omega.omegas()[j];
    let wk = omega.omegas()[k];
    let gap = wk - wj; // > 0 by ordering
    let mut n = (-wk / gap).floor() as i64; // first candidate at or below the root
    while (n as f64) * gap + wk <= 0.0 {
        n += 1;
    }
    let mut entries = vec![0; omega.len()];
    entries[j] = -n;
    entries[k] = n + 1;
    Ok((n, MultiIndex::new(entries)))
}

/// Minimal resonant indices, the non-resonant indices they do not dominate,
/// the basis indices, and the per-component enumeration bounds used.
#[derive(Debug, Clone, Serialize)]
pub struct IndexTables {
    pub r_min: Vec<MultiIndex>,
    pub nr1: Vec<MultiIndex>,
    pub nr0: Vec<MultiIndex>,
    /// [B, N*B]: all but one component of any table member is bounded by B,
    /// the remaining one by N*B.
    pub bounds: [i64; 2],
}

impl IndexTables {
    pub fn mode_count(&self) -> usize {
        self.nr0.len()
    }

    /// max over r_min of (||m|| - 1) / 2; the nonlinearity must carry Taylor
    /// coefficients at least to this order.
    pub fn max_resonance_order(&self) -> i64 {
        self.r_min
            .iter()
            .map(|m| (m.weight() - 1) / 2)
            .max()
            .unwrap_or(0)
    }

    pub fn min_resonant_weight(&self) -> i64 {
        self.r_min.iter().map(|m| m.weight()).min().unwrap_or(0)
    }
}

/// Visits every m in Z^N with at most one component of magnitude above
/// `small` and all components of magnitude at most `large`.
fn visit_box(n: usize, small: i64, large: i64, f: &mut impl FnMut(&[i64])) {
    fn rec(
        entries: &mut Vec<i64>,
        n: usize,
        small: i64,
        large: i64,
        used_large: bool,
        f: &mut impl FnMut(&[i64]),
    ) {
        if entries.len() == n {
            f(entries);
            return;
        }
        let cap = if used_large { small } else { large };
        for v in -cap..=cap {
            entries.push(v);
            let now_large = used_large || v.abs() > small;
            rec(entries, n, small, large, now_large, f);
            entries.pop();
        }
    }
    rec(&mut Vec::with_capacity(n), n, small, large, false, f);
}

/// Checks |m . omega| > tau for all m with entry sum 1 and ||m|| <= m_check.
/// Full rational independence of omega is a genericity assumption and is not
/// finitely checkable; only the indices that the classification actually
/// consumes are screened.
fn check_nonresonance_witness(omega: &FrequencyVector, m_check: i64, tau: f64) -> Result<()> {
    fn rec(
        entries: &mut Vec<i64>,
        n: usize,
        budget: i64,
        omega: &FrequencyVector,
        tau: f64,
    ) -> Result<()> {
        if entries.len() == n {
            if entries.iter().sum::<i64>() == 1 {
                let dot: f64 = entries
                    .iter()
                    .zip(omega.omegas())
                    .map(|(&m, &w)| m as f64 * w)
                    .sum();
                if dot.abs() <= tau {
                    return Err(Error::ResonanceDegeneracy {
                        index: entries.clone(),
                        value: dot,
                    });
                }
            }
            return Ok(());
        }
        for v in -budget..=budget {
            entries.push(v);
            rec(entries, n, budget - v.abs(), omega, tau)?;
            entries.pop();
        }
        Ok(())
    }
    rec(
        &mut Vec::with_capacity(omega.len()),
        omega.len(),
        m_check,
        omega,
        tau,
    )
}

/// Exhaustive enumeration of the minimal resonant indices and of the
/// non-resonant indices not dominated by any of them. The search box
/// `|m_j| <= B` for all but one component and `|m_j| <= N*B` for the
/// remaining one, with `B = max(n_jk) + 1`, contains both sets. Results are
/// sorted lexicographically.
pub fn enumerate_tables(omega: &FrequencyVector) -> Result<IndexTables> {
    let n = omega.len();
    let mut b = 0i64;
    for j in 0..n {
        for k in (j + 1)..n {
            let (njk, _) = pair_bound(j, k, omega)?;
            b = b.max(njk + 1);
        }
    }
    let large = n as i64 * b;
    let tau = TAU_NONRES * omega.max_abs();
    check_nonresonance_witness(omega, 3 * large, tau)?;

    let mut resonant: Vec<MultiIndex> = Vec::new();
    let mut nonresonant: Vec<MultiIndex> = Vec::new();
    let mut degenerate: Option<Vec<i64>> = None;
    visit_box(n, b, large, &mut |entries| {
        if degenerate.is_some() || entries.iter().sum::<i64>() != 1 {
            return;
        }
        let dot: f64 = entries
            .iter()
            .zip(omega.omegas())
            .map(|(&m, &w)| m as f64 * w)
            .sum();
        if dot.abs() <= tau {
            degenerate = Some(entries.to_vec());
        } else if dot > 0.0 {
            resonant.push(MultiIndex::new(entries.to_vec()));
        } else {
            nonresonant.push(MultiIndex::new(entries.to_vec()));
        }
    });
    if let Some(index) = degenerate {
        let dot: f64 = index
            .iter()
            .zip(omega.omegas())
            .map(|(&m, &w)| m as f64 * w)
            .sum();
        return Err(Error::ResonanceDegeneracy { index, value: dot });
    }

    let abs_of: Vec<Vec<i64>> = resonant.iter().map(|m| m.abs()).collect();
    let mut r_min: Vec<MultiIndex> = Vec::new();
    for (i, m) in resonant.iter().enumerate() {
        let minimal = abs_of
            .iter()
            .enumerate()
            .all(|(j, other)| j == i || !abs_strictly_dominated(other, &abs_of[i]));
        if minimal {
            r_min.push(m.clone());
        }
    }
    let r_min_abs: Vec<Vec<i64>> = r_min.iter().map(|m| m.abs()).collect();
    let mut nr1: Vec<MultiIndex> = nonresonant
        .into_iter()
        .filter(|m| {
            let a = m.abs();
            r_min_abs.iter().all(|r| !abs_strictly_dominated(r, &a))
        })
        .collect();

    r_min.sort();
    nr1.sort();
    let nr0: Vec<MultiIndex> = (0..n).map(|j| MultiIndex::basis(n, j)).collect();
    Ok(IndexTables {
        r_min,
        nr1,
        nr0,
        bounds: [b, large],
    })
}

/// z^(m) with negative exponents acting on the conjugate.
pub fn monomial_eval(z: &[Complex64], m: &MultiIndex) -> Result<Complex64> {
    if z.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            got: z.len(),
        });
    }
    let mut out = Complex64::new(1.0, 0.0);
    for (&zj, &mj) in z.iter().zip(m.entries()) {
        let base = if mj >= 0 { zj } else { zj.conj() };
        out *= base.powi(mj.unsigned_abs() as i32);
    }
    Ok(out)
}

/// For the product identity z^(m1) z^(m2) = |z|^deficit z^(m1+m2):
/// returns (deficit, m1+m2) with deficit = |m1| + |m2| - |m1+m2| entrywise.
/// Every deficit entry is a nonnegative even integer.
pub fn monomial_product_exponent(
    m1: &MultiIndex,
    m2: &MultiIndex,
) -> Result<(Vec<i64>, MultiIndex)> {
    if m1.len() != m2.len() {
        return Err(Error::DimensionMismatch {
            expected: m1.len(),
            got: m2.len(),
        });
    }
    let sum = m1.add(m2);
    let deficit = m1
        .entries()
        .iter()
        .zip(m2.entries())
        .zip(sum.entries())
        .map(|((a, b), s)| a.abs() + b.abs() - s.abs())
        .collect();
    Ok((deficit, sum))
}

/// |z|^v for an entrywise-even exponent vector, computed from |z_j|^2.
pub fn abs_power(z2: &[f64], v: &[i64]) -> f64 {
    z2.iter()
        .zip(v)
        .map(|(&s, &e)| {
            debug_assert!(e >= 0 && e % 2 == 0);
            s.powi((e / 2) as i32)
        })
        .product()
}

/// All ordered (2k+1)-tuples over `nr1` whose alternating sum (odd positions
/// minus even positions, 1-based) equals `target` and whose entrywise
/// absolute values add up to |target| exactly.
pub fn enumerate_a(
    k: usize,
    target: &MultiIndex,
    nr1: &[MultiIndex],
) -> Result<Vec<Vec<MultiIndex>>> {
    if k < 1 {
        return Err(Error::InvalidArgument(
            "tuple order must be at least 1".into(),
        ));
    }
    if target.degree_sum() != 1 {
        return Err(Error::InvalidArgument(format!(
            "target must have entry sum 1, got {}",
            target.degree_sum()
        )));
    }
    let tuple_len = 2 * k + 1;
    let target_abs = target.abs();
    let target_weight: i64 = target_abs.iter().sum();
    let mut out = Vec::new();
    // Each entry contributes weight >= 1, so tuples longer than the target
    // weight cannot satisfy the weight constraint.
    if (tuple_len as i64) > target_weight {
        return Ok(out);
    }

    fn rec(
        tuple: &mut Vec<MultiIndex>,
        tuple_len: usize,
        partial_sum: &mut Vec<i64>,
        partial_abs: &mut Vec<i64>,
        target: &MultiIndex,
        target_abs: &[i64],
        nr1: &[MultiIndex],
        out: &mut Vec<Vec<MultiIndex>>,
    ) {
        if tuple.len() == tuple_len {
            if partial_sum == target.entries() && partial_abs == target_abs {
                out.push(tuple.clone());
            }
            return;
        }
        let remaining = (tuple_len - tuple.len()) as i64;
        let sign: i64 = if tuple.len() % 2 == 0 { 1 } else { -1 };
        for cand in nr1 {
            let a = cand.abs();
            // Weight budget: the used weight plus what this entry adds must
            // stay entrywise within |target|, and each remaining slot needs
            // at least total weight 1.
            let mut feasible = true;
            let mut used: i64 = 0;
            for i in 0..a.len() {
                let w = partial_abs[i] + a[i];
                if w > target_abs[i] {
                    feasible = false;
                    break;
                }
                used += w;
            }
            let total: i64 = target_abs.iter().sum();
            if !feasible || total - used < remaining - 1 {
                continue;
            }
            for i in 0..a.len() {
                partial_sum[i] += sign * cand.entries()[i];
                partial_abs[i] += a[i];
            }
            tuple.push(cand.clone());
            rec(
                tuple, tuple_len, partial_sum, partial_abs, target, target_abs, nr1, out,
            );
            tuple.pop();
            for i in 0..a.len() {
                partial_sum[i] -= sign * cand.entries()[i];
                partial_abs[i] -= a[i];
            }
        }
    }

    rec(
        &mut Vec::with_capacity(tuple_len),
        tuple_len,
        &mut vec![0; target.len()],
        &mut vec![0; target.len()],
        target,
        &target_abs,
        nr1,
        &mut out,
    );
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn freq(v: &[f64]) -> FrequencyVector {
        FrequencyVector::new(v.to_vec()).unwrap()
    }

    fn mi(v: &[i64]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn classify_examples() {
        let omega = freq(&[-1.0, -0.1]);
        let c = classify(&mi(&[1, 0]), &omega).unwrap();
        assert_eq!(c.class, IndexClass::NonResonant);
        assert!((c.value + 1.0).abs() < 1e-15);

        let c = classify(&mi(&[-1, 2]), &omega).unwrap();
        assert_eq!(c.class, IndexClass::Resonant);
        assert!((c.value - 0.8).abs() < 1e-12);

        let c = classify(&mi(&[1, 1]), &omega).unwrap();
        assert_eq!(c.class, IndexClass::OffShell);
    }

    #[test]
    fn classify_length_mismatch() {
        let omega = freq(&[-1.0, -0.1]);
        assert!(classify(&mi(&[1, 0, 0]), &omega).is_err());
    }

    #[test]
    fn pair_bound_examples() {
        let (n, m) = pair_bound(0, 1, &freq(&[-1.0, -0.1])).unwrap();
        assert_eq!(n, 1);
        assert_eq!(m, mi(&[-1, 2]));

        let (n, m) = pair_bound(0, 1, &freq(&[-4.0, -1.0])).unwrap();
        assert_eq!(n, 1);
        assert_eq!(m, mi(&[-1, 2]));

        // omega = (-1, -0.9) is rationally dependent (9 w1 + ... = 0 for
        // m = (-9, 10)), so a nearby admissible pair is used here.
        let (n, m) = pair_bound(0, 1, &freq(&[-1.0, -0.89])).unwrap();
        assert_eq!(n, 9);
        assert_eq!(m, mi(&[-9, 10]));

        assert!(pair_bound(1, 1, &freq(&[-1.0, -0.1])).is_err());
    }

    #[test]
    fn tables_basic() {
        let tables = enumerate_tables(&freq(&[-1.0, -0.1])).unwrap();
        assert_eq!(tables.r_min, vec![mi(&[-1, 2])]);
        assert_eq!(tables.nr1, vec![mi(&[0, 1]), mi(&[1, 0]), mi(&[2, -1])]);
        assert_eq!(tables.min_resonant_weight(), 3);
        assert_eq!(tables.max_resonance_order(), 1);
    }

    #[test]
    fn tables_close_frequencies() {
        let tables = enumerate_tables(&freq(&[-1.0, -0.89])).unwrap();
        assert!(tables.r_min.contains(&mi(&[-9, 10])));
        // Basis indices always survive into NR1.
        for j in 0..2 {
            assert!(tables.nr1.contains(&MultiIndex::basis(2, j)));
        }
    }

    #[test]
    fn tables_reject_rational_dependence() {
        // omega = (-2, -1): m = (-1, 2) has entry sum 1 and m . omega = 0.
        let err = enumerate_tables(&freq(&[-2.0, -1.0])).unwrap_err();
        assert!(matches!(err, Error::ResonanceDegeneracy { .. }));
    }

    #[test]
    fn rmin_weight_at_least_three() {
        for omega in [
            freq(&[-1.0, -0.1]),
            freq(&[-1.0, -0.35]),
            freq(&[-2.513, -0.717, -0.203]),
        ] {
            let tables = enumerate_tables(&omega).unwrap();
            for m in &tables.r_min {
                assert!(m.weight() >= 3, "{m:?}");
            }
        }
    }

    #[test]
    fn monomial_examples() {
        let z = [Complex64::new(2.0, 0.0), Complex64::new(0.0, 1.0)];
        let v = monomial_eval(&z, &mi(&[1, -1])).unwrap();
        assert!((v - Complex64::new(0.0, -2.0)).norm() < 1e-15);

        let v = monomial_eval(&z, &mi(&[0, 0])).unwrap();
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);

        let z = [Complex64::new(1.0, 1.0), Complex64::new(3.0, 0.0)];
        let v = monomial_eval(&z, &mi(&[-2, 1])).unwrap();
        assert!((v - Complex64::new(0.0, -6.0)).norm() < 1e-12);
    }

    #[test]
    fn product_exponent_examples() {
        let (d, s) = monomial_product_exponent(&mi(&[1, 0]), &mi(&[-1, 1])).unwrap();
        assert_eq!(d, vec![2, 0]);
        assert_eq!(s, mi(&[0, 1]));

        let (d, s) = monomial_product_exponent(&mi(&[1, 0]), &mi(&[1, 0])).unwrap();
        assert_eq!(d, vec![0, 0]);
        assert_eq!(s, mi(&[2, 0]));
    }

    #[test]
    fn enumerate_a_examples() {
        let nr1 = vec![mi(&[0, 1]), mi(&[1, 0]), mi(&[2, -1])];
        let a = enumerate_a(1, &mi(&[2, -1]), &nr1).unwrap();
        assert_eq!(a, vec![vec![mi(&[1, 0]), mi(&[0, 1]), mi(&[1, 0])]]);

        let a = enumerate_a(1, &mi(&[-1, 2]), &nr1).unwrap();
        assert_eq!(a, vec![vec![mi(&[0, 1]), mi(&[1, 0]), mi(&[0, 1])]]);

        let a = enumerate_a(5, &mi(&[-1, 2]), &nr1).unwrap();
        assert!(a.is_empty());
    }

    proptest! {
        #[test]
        fn monomial_product_identity(
            zr in proptest::collection::vec(-2.0f64..2.0, 2),
            zi in proptest::collection::vec(-2.0f64..2.0, 2),
            m1 in proptest::collection::vec(-3i64..=3, 2),
            m2 in proptest::collection::vec(-3i64..=3, 2),
        ) {
            let z: Vec<Complex64> = zr.iter().zip(&zi).map(|(&r, &i)| Complex64::new(r, i)).collect();
            let m1 = MultiIndex::new(m1);
            let m2 = MultiIndex::new(m2);
            let (deficit, sum) = monomial_product_exponent(&m1, &m2).unwrap();
            for d in &deficit {
                prop_assert!(*d >= 0 && d % 2 == 0);
            }
            let z2: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
            let lhs = monomial_eval(&z, &m1).unwrap() * monomial_eval(&z, &m2).unwrap();
            let rhs = abs_power(&z2, &deficit) * monomial_eval(&z, &sum).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        }
    }
}
