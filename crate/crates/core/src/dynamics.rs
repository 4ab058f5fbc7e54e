//! Time integration of the nonlinear Schrodinger flow, modulation
//! coordinates (z, eta), and the diagnostics exhibiting standing-wave
//! selection: damping of the resonant monomials pumps energy from the bound
//! modes into radiation, which the absorbing layer removes.

use crate::error::{Error, Result};
use crate::fgr::FgrCoefficient;
use crate::indices::{monomial_eval, IndexTables, MultiIndex};
use crate::profile::{
    eval_profile, solve_profile, LeadingCoefficients, NonlinearitySpec, ProfileCoefficients,
};
use crate::spectral::{inner_real, norm_complex, GridOperator};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Modulation residual target.
pub const TAU_MOD: f64 = 1e-10;
/// Base-point drift triggering a profile-coefficient refresh.
pub const REFRESH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    /// Strang splitting with a discrete-sine-transform kinetic step; exactly
    /// mass-conserving per step.
    Strang,
    /// Semi-implicit Crank-Nicolson with fixed-point nonlinearity; used as a
    /// cross-check scheme.
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Fraction of the domain (per side) covered by the absorbing layer.
    pub sponge_width: f64,
    /// Peak damping rate of the absorbing layer.
    pub sponge_strength: f64,
    /// Diagnostics cadence in time units.
    pub sample_interval: f64,
}

impl IntegratorConfig {
    pub fn validate(&self, op: &GridOperator) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final >= 0.0) || !(self.sample_interval > 0.0) {
            return Err(Error::InvalidArgument(
                "dt, t_final and sample_interval must be positive".into(),
            ));
        }
        if self.dt * op.omega_scale() >= 0.5 {
            return Err(Error::InvalidArgument(format!(
                "dt {} too large for the mode frequencies (dt * max|omega| must stay below 0.5)",
                self.dt
            )));
        }
        if !(0.0..=0.2).contains(&self.sponge_width) {
            return Err(Error::InvalidArgument(
                "sponge must stay outside the inner 60% of the domain".into(),
            ));
        }
        if self.sponge_strength < 0.0 {
            return Err(Error::InvalidArgument(
                "sponge strength must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Discrete Hamiltonian energy E(u) = <Hu, u>/2 + h sum G(|u|^2)/2 with G
/// the antiderivative of g.
pub fn energy(op: &GridOperator, nl: &NonlinearitySpec, u: &[Complex64]) -> f64 {
    let hu = op.apply(u);
    let h = op.h();
    let quad: f64 = hu.iter().zip(u).map(|(a, b)| (a * b.conj()).re).sum::<f64>() * h;
    let pot: f64 = u.iter().map(|v| nl.antiderivative(v.norm_sqr())).sum::<f64>() * h;
    0.5 * (quad + pot)
}

/// Precomputed machinery for repeated time steps.
pub struct Stepper {
    cfg: IntegratorConfig,
    fft: Arc<dyn Fft<f64>>,
    /// exp(-i dt lambda_k) for the discrete Dirichlet Laplacian eigenvalues.
    kinetic_phase: Vec<Complex64>,
    /// Per-point absorption factor exp(-sigma(x) dt).
    absorb: Vec<f64>,
    /// Workspace for the odd extension.
    ext: Vec<Complex64>,
    guard: f64,
}

impl Stepper {
    pub fn new(op: &GridOperator, cfg: IntegratorConfig, u0: &[Complex64]) -> Result<Self> {
        cfg.validate(op)?;
        let n = op.n();
        let ni = n - 2;
        let m = ni + 1;
        let h = op.h();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * m);
        let kinetic_phase: Vec<Complex64> = (1..=ni)
            .map(|k| {
                let lam = (2.0 - 2.0 * (std::f64::consts::PI * k as f64 / m as f64).cos())
                    / (h * h);
                Complex64::from_polar(1.0, -cfg.dt * lam)
            })
            .collect();
        let half_width = 0.5 * (op.grid.x_max - op.grid.x_min);
        let inner_edge = (1.0 - cfg.sponge_width) * half_width;
        let absorb: Vec<f64> = op
            .grid
            .xs()
            .iter()
            .map(|&x| {
                let d = x.abs() - inner_edge;
                if d <= 0.0 || cfg.sponge_width == 0.0 {
                    1.0
                } else {
                    let s = (d / (half_width - inner_edge)).min(1.0);
                    (-cfg.sponge_strength * s.powi(3) * cfg.dt).exp()
                }
            })
            .collect();
        let guard = 10.0 * u0.iter().fold(1e-300f64, |acc, v| acc.max(v.norm()));
        Ok(Self {
            cfg,
            fft,
            kinetic_phase,
            absorb,
            ext: vec![Complex64::new(0.0, 0.0); 2 * m],
            guard,
        })
    }

    /// DST-I of the interior values via an odd-extension FFT, in place on
    /// `field[1..n-1]`.
    fn dst(&mut self, field: &mut [Complex64]) {
        let n = field.len();
        let ni = n - 2;
        let m = ni + 1;
        let zero = Complex64::new(0.0, 0.0);
        self.ext[0] = zero;
        self.ext[m] = zero;
        for j in 1..=ni {
            self.ext[j] = field[j];
            self.ext[2 * m - j] = -field[j];
        }
        self.fft.process(&mut self.ext);
        let half_i = Complex64::new(0.0, 0.5);
        for j in 1..=ni {
            field[j] = half_i * self.ext[j];
        }
    }

    /// One Strang step: half potential/nonlinear phase, exact kinetic step
    /// in the sine basis, half phase, then boundary absorption.
    pub fn step(
        &mut self,
        op: &GridOperator,
        nl: &NonlinearitySpec,
        u: &mut [Complex64],
    ) -> Result<()> {
        match self.cfg.scheme {
            Scheme::Strang => self.step_strang(op, nl, u),
            Scheme::CrankNicolson => self.step_cn(op, nl, u),
        }
    }

    fn step_strang(
        &mut self,
        op: &GridOperator,
        nl: &NonlinearitySpec,
        u: &mut [Complex64],
    ) -> Result<()> {
        let n = u.len();
        let half_dt = 0.5 * self.cfg.dt;
        let phase_half = |u: &mut [Complex64]| {
            for i in 1..n - 1 {
                let s = u[i].norm_sqr();
                let theta = -(op.potential[i] + nl.eval(s)) * half_dt;
                u[i] *= Complex64::from_polar(1.0, theta);
            }
        };
        phase_half(u);
        // Kinetic: S diag(e^{-i dt lam}) S u * 2/M.
        self.dst(u);
        let ni = n - 2;
        let scale = 2.0 / (ni + 1) as f64;
        for (j, p) in self.kinetic_phase.iter().enumerate() {
            u[j + 1] *= p * scale;
        }
        self.dst(u);
        phase_half(u);
        let mut max_u = 0.0f64;
        for i in 1..n - 1 {
            u[i] *= self.absorb[i];
            max_u = max_u.max(u[i].norm_sqr());
        }
        let max_u = max_u.sqrt();
        if max_u > self.guard {
            return Err(Error::Instability {
                max_u,
                guard: self.guard,
            });
        }
        Ok(())
    }

    fn step_cn(
        &mut self,
        op: &GridOperator,
        nl: &NonlinearitySpec,
        u: &mut [Complex64],
    ) -> Result<()> {
        let dt = self.cfg.dt;
        let n = u.len();
        // Fixed-point iteration on the midpoint nonlinearity.
        let mut mid: Vec<f64> = u.iter().map(|v| v.norm_sqr()).collect();
        let mut new = u.to_vec();
        for _ in 0..4 {
            // rhs = (1 - i dt/2 (H + g)) u.
            let hu = op.apply(u);
            let mut rhs = vec![Complex64::new(0.0, 0.0); n];
            for i in 1..n - 1 {
                rhs[i] = u[i]
                    - Complex64::new(0.0, 0.5 * dt) * (hu[i] + nl.eval(mid[i]) * u[i]);
            }
            // Solve (1 + i dt/2 (H + g)) new = rhs: shifted complex
            // tridiagonal system expressed through the resolvent with a
            // rescaled operator. (H + g_mid) is tridiagonal with the g term
            // on the diagonal; reuse resolvent_solve by folding g_mid into a
            // temporary operator copy.
            let mut op_g = op.clone();
            for i in 0..n {
                op_g.potential[i] += nl.eval(mid[i]);
            }
            // (1 + i dt/2 A) x = rhs  <=>  (A - (2i/dt)) x = (2/(i dt)) rhs.
            let shift = Complex64::new(0.0, 2.0 / dt);
            let scaled: Vec<Complex64> = rhs
                .iter()
                .map(|&v| v * Complex64::new(0.0, -2.0 / dt))
                .collect();
            new = op_g.resolvent_solve(shift, &scaled)?;
            for i in 0..n {
                mid[i] = 0.5 * (u[i].norm_sqr() + new[i].norm_sqr());
            }
        }
        let mut max_u = 0.0f64;
        for i in 0..n {
            u[i] = new[i] * if i == 0 || i == n - 1 { 0.0 } else { self.absorb[i] };
            max_u = max_u.max(u[i].norm());
        }
        if max_u > self.guard {
            return Err(Error::Instability {
                max_u,
                guard: self.guard,
            });
        }
        Ok(())
    }
}

/// Profile coefficients at a frozen base point plus the scalar projections
/// <correction_m, phi_j> that make the modulation equations cheap.
pub struct ProfileCache {
    pub coeffs: ProfileCoefficients,
    /// Per NR1 index: the projections onto each phi_j.
    proj: Vec<(MultiIndex, Vec<f64>)>,
}

impl ProfileCache {
    pub fn new(op: &GridOperator, lead: &LeadingCoefficients, coeffs: ProfileCoefficients) -> Self {
        let h = op.h();
        let proj = coeffs
            .psi
            .iter()
            .map(|(m, psi)| {
                let base = lead.excess0(m).expect("NR1 coefficient");
                let field: Vec<f64> = base.iter().zip(psi).map(|(&a, &b)| a + b).collect();
                let c: Vec<f64> = op
                    .phis
                    .iter()
                    .map(|phi| inner_real(h, &field, phi))
                    .collect();
                (m.clone(), c)
            })
            .collect();
        Self { coeffs, proj }
    }

    /// (phi(z), phi_j) for all j, using orthonormality of the phi_j.
    fn profile_projections(&self, z: &[Complex64]) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = z.to_vec();
        for (m, c) in &self.proj {
            let zm = monomial_eval(z, m).expect("length match");
            if zm == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (o, &cj) in out.iter_mut().zip(c) {
                *o += zm * cj;
            }
        }
        out
    }
}

fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<()> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::ModulationDiverged { residual: f64::NAN });
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for c in col + 1..n {
            acc -= a[col][c] * b[c];
        }
        b[col] = acc / a[col][col];
    }
    Ok(())
}

/// Extracts the modulation pair (z, eta): Newton solve of the complex
/// orthogonality conditions (phi(z) - u, phi_j) = 0, warm-started at
/// `z_guess`, followed by eta = u - phi(z).
pub fn modulate(
    op: &GridOperator,
    lead: &LeadingCoefficients,
    cache: &ProfileCache,
    u: &[Complex64],
    z_guess: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let dim = z_guess.len();
    let h = op.h();
    let p: Vec<Complex64> = op
        .phis
        .iter()
        .map(|phi| u.iter().zip(phi).map(|(a, &b)| a * b).sum::<Complex64>() * h)
        .collect();
    let residual = |z: &[Complex64]| -> Vec<f64> {
        let proj = cache.profile_projections(z);
        let mut r = Vec::with_capacity(2 * dim);
        for j in 0..dim {
            let d = proj[j] - p[j];
            r.push(d.re);
            r.push(d.im);
        }
        r
    };
    let norm = |r: &[f64]| {
        r.chunks_exact(2)
            .fold(0.0f64, |acc, p| acc.max(p[0].hypot(p[1])))
    };

    let mut z = z_guess.to_vec();
    let mut r = residual(&z);
    for _ in 0..60 {
        if norm(&r) <= TAU_MOD {
            let phi_z = eval_profile(op, lead, &cache.coeffs, &z)?;
            let eta: Vec<Complex64> = u.iter().zip(&phi_z).map(|(a, b)| a - b).collect();
            return Ok((z, eta));
        }
        // Finite-difference Jacobian of the 2N real conditions.
        let fd = 1e-7;
        let mut jac: Vec<Vec<f64>> = vec![vec![0.0; 2 * dim]; 2 * dim];
        for k in 0..dim {
            for (part, delta) in [(0usize, Complex64::new(fd, 0.0)), (1, Complex64::new(0.0, fd))]
            {
                let mut zp = z.clone();
                zp[k] += delta;
                let rp = residual(&zp);
                for row in 0..2 * dim {
                    jac[row][2 * k + part] = (rp[row] - r[row]) / fd;
                }
            }
        }
        let mut step = r.clone();
        solve_dense(&mut jac, &mut step)?;
        for k in 0..dim {
            z[k] -= Complex64::new(step[2 * k], step[2 * k + 1]);
        }
        r = residual(&z);
    }
    Err(Error::ModulationDiverged { residual: norm(&r) })
}

/// One diagnostics sample along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct DiagRow {
    pub t: f64,
    pub z_abs: Vec<f64>,
    /// Energy of the extracted profile E(phi(z)).
    pub e_profile: f64,
    /// Total mass ||u||^2.
    pub mass: f64,
    /// |z^m|^2 per minimal resonant index.
    pub zm2: Vec<f64>,
    pub sum_zm2: f64,
    /// L2 norm of eta over the inner 60% of the domain.
    pub eta_l2_inner: f64,
    /// Max modulation orthogonality residual |(eta, phi_j)|.
    pub ortho_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Selected(usize),
    Undecided,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub rows: Vec<DiagRow>,
    pub verdict: Verdict,
    pub final_z_abs: Vec<f64>,
    /// Cumulative integral of sum |z^m|^2 over the run.
    pub cumulative_zm2: f64,
    pub profile_refreshes: usize,
}

/// Integrates u(0) = phi(z0) to t_final, extracting modulation coordinates
/// and recording the selection diagnostics.
pub fn run_selection(
    op: &GridOperator,
    nl: &NonlinearitySpec,
    tables: &IndexTables,
    lead: &LeadingCoefficients,
    cfg: IntegratorConfig,
    z0: &[Complex64],
) -> Result<SelectionReport> {
    let z2: Vec<f64> = z0.iter().map(|v| v.norm_sqr()).collect();
    let coeffs = solve_profile(op, nl, tables, lead, &z2)?;
    let mut cache = ProfileCache::new(op, lead, coeffs);
    let mut u = eval_profile(op, lead, &cache.coeffs, z0)?;
    let mut stepper = Stepper::new(op, cfg, &u)?;
    let mut z = z0.to_vec();
    let mut refreshes = 0usize;

    let n_steps = (cfg.t_final / cfg.dt).round() as usize;
    let sample_every = (cfg.sample_interval / cfg.dt).round().max(1.0) as usize;
    let h = op.h();
    let n = op.n();
    let inner_lo = (n as f64 * 0.2) as usize;
    let inner_hi = n - inner_lo;

    let mut rows = Vec::new();
    let mut cumulative_zm2 = 0.0f64;
    let mut last_sum_zm2 = 0.0f64;

    let sample = |t: f64,
                      u: &[Complex64],
                      z: &[Complex64],
                      cache: &ProfileCache,
                      cumulative: &mut f64,
                      last: &mut f64|
     -> Result<DiagRow> {
        let phi_z = eval_profile(op, lead, &cache.coeffs, z)?;
        let eta: Vec<Complex64> = u.iter().zip(&phi_z).map(|(a, b)| a - b).collect();
        let mut ortho = 0.0f64;
        for phi in &op.phis {
            let c = eta.iter().zip(phi).map(|(a, &b)| a * b).sum::<Complex64>() * h;
            ortho = ortho.max(c.norm());
        }
        let zm2: Vec<f64> = tables
            .r_min
            .iter()
            .map(|m| monomial_eval(z, m).map(|v| v.norm_sqr()))
            .collect::<Result<_>>()?;
        let sum_zm2: f64 = zm2.iter().sum();
        if !rows_is_empty_hint(*last) {
            *cumulative += 0.5 * (sum_zm2 + *last) * cfg.sample_interval;
        }
        *last = sum_zm2;
        let eta_inner: f64 = eta[inner_lo..inner_hi]
            .iter()
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            * h;
        Ok(DiagRow {
            t,
            z_abs: z.iter().map(|v| v.norm()).collect(),
            e_profile: energy(op, nl, &phi_z),
            mass: norm_complex(h, u).powi(2),
            zm2,
            sum_zm2,
            eta_l2_inner: eta_inner.sqrt(),
            ortho_residual: ortho,
        })
    };

    rows.push(sample(0.0, &u, &z, &cache, &mut cumulative_zm2, &mut last_sum_zm2)?);
    for step_idx in 1..=n_steps {
        stepper.step(op, nl, &mut u)?;
        let (z_new, _eta) = match modulate(op, lead, &cache, &u, &z) {
            Ok(pair) => pair,
            Err(Error::ModulationDiverged { residual }) => {
                return Err(Error::ModulationDiverged { residual })
            }
            Err(e) => return Err(e),
        };
        z = z_new;
        // Refresh the coefficient cache when |z|^2 drifts.
        let drift = z
            .iter()
            .zip(&cache.coeffs.z2)
            .fold(0.0f64, |acc, (v, &b)| acc.max((v.norm_sqr() - b).abs()));
        if drift > REFRESH_TOL {
            let z2_now: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
            let coeffs = solve_profile(op, nl, tables, lead, &z2_now)?;
            cache = ProfileCache::new(op, lead, coeffs);
            let (z_new, _) = modulate(op, lead, &cache, &u, &z)?;
            z = z_new;
            refreshes += 1;
        }
        if step_idx % sample_every == 0 {
            let t = step_idx as f64 * cfg.dt;
            rows.push(sample(t, &u, &z, &cache, &mut cumulative_zm2, &mut last_sum_zm2)?);
        }
    }

    let final_z_abs: Vec<f64> = z.iter().map(|v| v.norm()).collect();
    let verdict = selection_verdict(&final_z_abs);
    Ok(SelectionReport {
        rows,
        verdict,
        final_z_abs,
        cumulative_zm2,
        profile_refreshes: refreshes,
    })
}

// The trapezoid accumulator needs to skip the very first sample; a zero
// sentinel would misbehave for data starting at exactly zero, but those runs
// contribute nothing to the integral anyway.
fn rows_is_empty_hint(last: f64) -> bool {
    last == 0.0
}

/// Survivor must exceed every runner-up fivefold.
pub fn selection_verdict(final_z_abs: &[f64]) -> Verdict {
    let mut best = 0usize;
    for (j, &v) in final_z_abs.iter().enumerate() {
        if v > final_z_abs[best] {
            best = j;
        }
    }
    let decided = final_z_abs
        .iter()
        .enumerate()
        .all(|(j, &v)| j == best || final_z_abs[best] >= 5.0 * v);
    if decided {
        Verdict::Selected(best)
    } else {
        Verdict::Undecided
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DissipationFit {
    /// Regression slope of -dE against sum_m Gamma_m |z^m|^2 (ideal 1).
    pub slope: f64,
    /// Pearson correlation over the windows.
    pub correlation: f64,
    pub inconclusive: bool,
}

/// Windowed regression of the profile-energy decrease against the
/// FGR-predicted dissipation sum_m Gamma_m integral |z^m|^2.
pub fn fgr_dissipation_diagnostic(
    rows: &[DiagRow],
    gammas: &[FgrCoefficient],
) -> DissipationFit {
    let n_windows = 10usize.min(rows.len().saturating_sub(1));
    if n_windows < 3 {
        return DissipationFit {
            slope: 0.0,
            correlation: 0.0,
            inconclusive: true,
        };
    }
    let per = (rows.len() - 1) / n_windows;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for w in 0..n_windows {
        let a = w * per;
        let b = (a + per).min(rows.len() - 1);
        let de = rows[a].e_profile - rows[b].e_profile;
        // Trapezoid of sum_m Gamma_m |z^m|^2 over the window.
        let mut x = 0.0;
        for i in a..b {
            let dt = rows[i + 1].t - rows[i].t;
            let mut f0 = 0.0;
            let mut f1 = 0.0;
            for (k, g) in gammas.iter().enumerate() {
                f0 += g.gamma * rows[i].zm2.get(k).copied().unwrap_or(0.0);
                f1 += g.gamma * rows[i + 1].zm2.get(k).copied().unwrap_or(0.0);
            }
            x += 0.5 * (f0 + f1) * dt;
        }
        xs.push(x);
        ys.push(de);
    }
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let scale = xs.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if scale <= 1e-300 || sy.abs() <= 1e-300 {
        return DissipationFit {
            slope: 0.0,
            correlation: 0.0,
            inconclusive: true,
        };
    }
    let nw = xs.len() as f64;
    let mx = sx / nw;
    let my = sy / nw;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    // Through-origin slope is the physical fit; the centered moments give
    // the correlation.
    let slope = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>()
        / xs.iter().map(|x| x * x).sum::<f64>();
    let correlation = if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        0.0
    };
    DissipationFit {
        slope,
        correlation,
        inconclusive: false,
    }
}

/// Per-m decomposition map kept for report emission.
pub fn zm2_map(tables: &IndexTables, z: &[Complex64]) -> Result<BTreeMap<MultiIndex, f64>> {
    tables
        .r_min
        .iter()
        .map(|m| Ok((m.clone(), monomial_eval(z, m)?.norm_sqr())))
        .collect()
}
