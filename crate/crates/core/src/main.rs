//! Command-line driver: spectrum / indices / profile / fgr / simulate, each
//! emitting JSON manifests (and CSV series where applicable) into the output
//! directory.

use clap::{Parser, Subcommand};
use modewave::config::RunConfig;
use modewave::dynamics::{
    fgr_dissipation_diagnostic, run_selection, SelectionReport, Verdict,
};
use modewave::fgr::{
    check_fgr_assumption, compute_gamma, default_eps_ladder, genericity_quadratic,
    FgrCoefficient,
};
use modewave::indices::{enumerate_tables, FrequencyVector, MultiIndex};
use modewave::profile::{build_leading, forced_residual, resonant_g, solve_profile, totals};
use modewave::spectral::norm_real;
use modewave::{Error, Result};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "modewave", version, about = "Resonance tables, refined profiles, damping rates and standing-wave selection for 1D NLS")]
struct Cli {
    /// Path to a TOML run configuration (defaults to the built-in config).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Proceed even when upstream checks fail.
    #[arg(long, global = true)]
    force: bool,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Discrete spectrum, gaps and admissibility checks for the potential.
    Spectrum,
    /// Resonant / nonresonant multi-index tables for the mode frequencies.
    Indices,
    /// Refined-profile coefficients, frequency shifts and forced residual.
    Profile {
        /// Base point |z_j|^2, comma separated; defaults to simulate.z0
        /// squared.
        #[arg(long, value_delimiter = ',')]
        z2: Option<Vec<f64>>,
    },
    /// Damping rates Gamma_m with ladder diagnostics and genericity report.
    Fgr,
    /// Time-domain selection run with modulation diagnostics.
    Simulate,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Io(_) | Error::InvalidArgument(_) => 2,
                _ => 1,
            }
        }
    });
}

fn run(cli: Cli) -> Result<()> {
    let cfg_text = match &cli.config {
        Some(p) => fs::read_to_string(p)?,
        None => modewave::config::DEFAULT_CONFIG.to_string(),
    };
    let mut cfg = RunConfig::parse(&cfg_text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    fs::create_dir_all(&out_dir)?;
    match cli.cmd {
        Cmd::Spectrum => cmd_spectrum(&cfg, &out_dir),
        Cmd::Indices => cmd_indices(&cfg, &out_dir),
        Cmd::Profile { z2 } => cmd_profile(&cfg, &out_dir, z2),
        Cmd::Fgr => cmd_fgr(&cfg, &out_dir).map(|_| ()),
        Cmd::Simulate => cmd_simulate(&cfg, &out_dir, cli.force),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("serialize: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn index_json(m: &MultiIndex) -> serde_json::Value {
    json!(m.entries())
}

fn cmd_spectrum(cfg: &RunConfig, out: &Path) -> Result<()> {
    let op = cfg.build_operator()?;
    let omega = FrequencyVector::new(op.omegas.clone())?;
    // enumerate_tables runs the nonresonance witness internally.
    let witness = enumerate_tables(&omega).map(|_| true)?;
    let gaps: Vec<f64> = op.omegas.windows(2).map(|w| w[1] - w[0]).collect();
    let n = op.n();
    let boundary: Vec<f64> = op
        .phis
        .iter()
        .map(|phi| phi[1].abs().max(phi[n - 2].abs()))
        .collect();
    let report = json!({
        "config_hash": cfg.hash(),
        "n_modes": op.omegas.len(),
        "omegas": op.omegas,
        "gaps": gaps,
        "nonresonance_witness": witness,
        "boundary_amplitudes": boundary,
    });
    write_json(&out.join("spectrum.json"), &report)?;
    println!("mode  omega            gap_to_next");
    for (j, w) in op.omegas.iter().enumerate() {
        let gap = gaps
            .get(j)
            .map_or_else(|| "-".to_string(), |g| format!("{g:.9}"));
        println!("{j:>4}  {w:>15.9}  {gap}");
    }
    println!("nonresonance witness: passed");
    Ok(())
}

fn cmd_indices(cfg: &RunConfig, out: &Path) -> Result<()> {
    let op = cfg.build_operator()?;
    let omega = FrequencyVector::new(op.omegas.clone())?;
    let tables = enumerate_tables(&omega)?;
    let shift = |m: &MultiIndex| -> f64 {
        m.entries()
            .iter()
            .zip(&op.omegas)
            .map(|(&mi, w)| mi as f64 * w)
            .sum()
    };
    let list = |v: &[MultiIndex]| -> Vec<serde_json::Value> {
        v.iter()
            .map(|m| json!({"m": index_json(m), "shift": shift(m)}))
            .collect()
    };
    let report = json!({
        "config_hash": cfg.hash(),
        "omegas": op.omegas,
        "r_min": list(&tables.r_min),
        "nr1": list(&tables.nr1),
        "nr0": list(&tables.nr0),
        "bounds": tables.bounds,
        "max_resonance_order": tables.max_resonance_order(),
    });
    write_json(&out.join("indices.json"), &report)?;
    println!(
        "R_min: {:?}",
        tables.r_min.iter().map(|m| m.entries().to_vec()).collect::<Vec<_>>()
    );
    println!(
        "NR1:   {:?}",
        tables.nr1.iter().map(|m| m.entries().to_vec()).collect::<Vec<_>>()
    );
    Ok(())
}

fn write_field_csv(path: &Path, xs: &[f64], field: &[f64]) -> Result<()> {
    let mut text = String::from("x,value\n");
    for (x, v) in xs.iter().zip(field) {
        text.push_str(&format!("{x:.12e},{v:.12e}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

fn mlabel(m: &MultiIndex) -> String {
    m.entries()
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("_")
}

fn cmd_profile(cfg: &RunConfig, out: &Path, z2_arg: Option<Vec<f64>>) -> Result<()> {
    let op = cfg.build_operator()?;
    let nl = cfg.build_nonlinearity()?;
    let omega = FrequencyVector::new(op.omegas.clone())?;
    let tables = enumerate_tables(&omega)?;
    let lead = build_leading(&op, &nl, &tables)?;
    let z2 = z2_arg.unwrap_or_else(|| cfg.simulate.z0.iter().map(|v| v * v).collect());
    if z2.len() != op.omegas.len() {
        return Err(Error::InvalidArgument(format!(
            "--z2 needs {} entries",
            op.omegas.len()
        )));
    }
    let radius: f64 = z2.iter().map(|v| v.max(0.0).sqrt()).sum();
    if radius >= cfg.profile.radius {
        return Err(Error::InvalidArgument(format!(
            "requested amplitude {radius} exceeds the profile validity radius {}",
            cfg.profile.radius
        )));
    }
    let coeffs = solve_profile(&op, &nl, &tables, &lead, &z2)?;
    let z: Vec<Complex64> = z2.iter().map(|&v| Complex64::new(v.sqrt(), 0.0)).collect();
    let residual = forced_residual(&op, &nl, &lead, &coeffs, &z)?;
    let g_res = resonant_g(&nl, &tables, &lead, &coeffs);

    let xs = op.grid.xs();
    let h = op.h();
    let fields = totals(&lead, &coeffs);
    let mut manifest_entries = Vec::new();
    for (m, field) in &fields {
        let shift: f64 = m
            .entries()
            .iter()
            .zip(&op.omegas)
            .map(|(&mi, w)| mi as f64 * w)
            .sum();
        let name = format!("coef_{}.csv", mlabel(m));
        write_field_csv(&out.join(&name), &xs, field)?;
        manifest_entries.push(json!({
            "m": index_json(m),
            "shift": shift,
            "l2_norm": norm_real(h, field),
            "file": name,
        }));
    }
    for (m, field) in &g_res {
        let name = format!("forcing_{}.csv", mlabel(m));
        write_field_csv(&out.join(&name), &xs, field)?;
    }
    let report = json!({
        "config_hash": cfg.hash(),
        "z2": z2,
        "varpi": coeffs.varpi,
        "omegas": op.omegas,
        "iterations": coeffs.iterations,
        "fixed_point_residual": coeffs.residual,
        "coefficients": manifest_entries,
        "forcing_norms": g_res.iter().map(|(m, f)| json!({
            "m": index_json(m),
            "l2_norm": norm_real(h, f),
        })).collect::<Vec<_>>(),
        "residual_norms": {
            "raw": residual.raw_norms,
            "after_g": residual.after_g_norms,
        },
    });
    write_json(&out.join("profile.json"), &report)?;
    println!(
        "profile solved in {} iterations, residual {:.3e}",
        coeffs.iterations, coeffs.residual
    );
    println!(
        "forced residual after removing resonant forcing: {:.6e}",
        residual.after_g_norms[0]
    );
    Ok(())
}

struct FgrOutcome {
    coeffs: Vec<FgrCoefficient>,
    passed: bool,
}

fn cmd_fgr(cfg: &RunConfig, out: &Path) -> Result<FgrOutcome> {
    let op = cfg.build_operator()?;
    let nl = cfg.build_nonlinearity()?;
    let omega = FrequencyVector::new(op.omegas.clone())?;
    let tables = enumerate_tables(&omega)?;
    let lead = build_leading(&op, &nl, &tables)?;
    let h = op.h();
    let mut coeffs = Vec::new();
    let mut genericity = Vec::new();
    for m in &tables.r_min {
        let lambda: f64 = m
            .entries()
            .iter()
            .zip(&op.omegas)
            .map(|(&mi, w)| mi as f64 * w)
            .sum();
        let ladder = if cfg.fgr.epsilon_ladder.is_empty() {
            default_eps_ladder(lambda, h)
        } else {
            cfg.fgr.epsilon_ladder.clone()
        };
        let g_m = lead
            .g_big
            .get(m)
            .ok_or_else(|| Error::InvalidArgument(format!("no forcing vector for {m:?}")))?;
        coeffs.push(compute_gamma(&op, m, g_m, lambda, &ladder)?);
        genericity.push(genericity_quadratic(&op, &tables, &nl, m, &ladder, 1e-12)?);
    }
    let check = check_fgr_assumption(&coeffs, cfg.fgr.tau);
    let report = json!({
        "config_hash": cfg.hash(),
        "tau": cfg.fgr.tau,
        "passed": check.passed,
        "rates": coeffs.iter().map(|c| json!({
            "m": index_json(&c.m),
            "lambda": c.lambda,
            "gamma": c.gamma,
            "gamma_raw": c.gamma_raw,
            "ladder": c.epsilon_ladder,
        })).collect::<Vec<_>>(),
        "genericity": genericity.iter().map(|g| json!({
            "m": index_json(&g.m),
            "l_m": g.l_m,
            "n_m": g.n_m,
            "quadratic": [g.a, g.b, g.c],
            "excluded_roots": g.excluded_roots,
        })).collect::<Vec<_>>(),
    });
    write_json(&out.join("fgr.json"), &report)?;
    for c in &coeffs {
        println!(
            "m = {:?}: lambda = {:.6}, gamma = {:.6e} ({})",
            c.m.entries(),
            c.lambda,
            c.gamma,
            if c.gamma > cfg.fgr.tau { "pass" } else { "fail" }
        );
    }
    Ok(FgrOutcome {
        coeffs,
        passed: check.passed,
    })
}

fn write_series_csv(path: &Path, report: &SelectionReport, n_modes: usize) -> Result<()> {
    let mut header = String::from("t");
    for j in 1..=n_modes {
        header.push_str(&format!(",abs_z{j}"));
    }
    header.push_str(",e_profile,mass,sum_zm2,eta_l2_inner,ortho_residual\n");
    let mut text = header;
    for row in &report.rows {
        text.push_str(&format!("{:.6}", row.t));
        for v in &row.z_abs {
            text.push_str(&format!(",{v:.12e}"));
        }
        text.push_str(&format!(
            ",{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            row.e_profile, row.mass, row.sum_zm2, row.eta_l2_inner, row.ortho_residual
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, out: &Path, force: bool) -> Result<()> {
    let fgr_outcome = cmd_fgr(cfg, out)?;
    if !fgr_outcome.passed && !force {
        return Err(Error::PipelineGate(
            "damping-rate check failed; dissipation diagnostics would be meaningless (pass --force to run anyway)"
                .into(),
        ));
    }
    let op = cfg.build_operator()?;
    let nl = cfg.build_nonlinearity()?;
    let omega = FrequencyVector::new(op.omegas.clone())?;
    let tables = enumerate_tables(&omega)?;
    let lead = build_leading(&op, &nl, &tables)?;
    let icfg = cfg.integrator.build()?;
    if cfg.simulate.z0.len() != op.omegas.len() {
        return Err(Error::InvalidArgument(format!(
            "simulate.z0 needs {} entries",
            op.omegas.len()
        )));
    }
    let z0: Vec<Complex64> = cfg
        .simulate
        .z0
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let report = run_selection(&op, &nl, &tables, &lead, icfg, &z0)?;
    let fit = fgr_dissipation_diagnostic(&report.rows, &fgr_outcome.coeffs);
    write_series_csv(&out.join("series.csv"), &report, op.omegas.len())?;
    let manifest = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "verdict": match report.verdict {
            Verdict::Selected(j) => json!({"selected": j}),
            Verdict::Undecided => json!("undecided"),
        },
        "final_z_abs": report.final_z_abs,
        "cumulative_zm2": report.cumulative_zm2,
        "profile_refreshes": report.profile_refreshes,
        "dissipation_fit": {
            "slope": fit.slope,
            "correlation": fit.correlation,
            "inconclusive": fit.inconclusive,
        },
        "rates": fgr_outcome.coeffs.iter().map(|c| json!({
            "m": index_json(&c.m),
            "gamma": c.gamma,
        })).collect::<Vec<_>>(),
    });
    write_json(&out.join("simulate.json"), &manifest)?;
    match report.verdict {
        Verdict::Selected(j) => println!("selection verdict: mode {} survives", j + 1),
        Verdict::Undecided => println!("selection verdict: undecided at t_final"),
    }
    println!(
        "dissipation fit: slope {:.4}, correlation {:.4}{}",
        fit.slope,
        fit.correlation,
        if fit.inconclusive { " (inconclusive)" } else { "" }
    );
    Ok(())
}
