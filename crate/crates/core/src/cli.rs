//! Command-line front end. Exit codes: 0 ok, 1 a checked property failed,
//! 2 usage, precondition or input errors.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::admissibility::{chi_zero, phi, phi_expanded, phi_map, AdmissibilityParams, SearchConfig, C0_DEFAULT};
use crate::config::RunConfig;
use crate::diagnostics::{
    check_dissipation, check_gradient_bound, check_lower_bound, estimate_tau, max_mass_drift, DissipationConfig,
};
use crate::error::{Error, Result};
use crate::field::write_field_csv;
use crate::functionals::{read_series_csv, write_series_csv};
use crate::quadrature::{eta_lower_bound, EtaInputs};
use crate::solver::{check_v_floor, run_observed, Simulation, State};
use crate::verify::{run_suite, write_table, Suite};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative mass drift tolerated by `diagnose`.
pub const MASS_DRIFT_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "chemolab", version, about = "Singular-sensitivity chemotaxis laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Window {
    #[arg(long, default_value_t = 0.01)]
    pub a_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub a_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub b_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub b_max: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate phi(a, b; chi)
    Phi {
        #[arg(allow_negative_numbers = true)]
        a: f64,
        #[arg(allow_negative_numbers = true)]
        b: f64,
        #[arg(allow_negative_numbers = true)]
        chi: f64,
        #[arg(long, default_value_t = C0_DEFAULT)]
        c0: f64,
    },
    /// Tabulate phi over an (a, b) window as CSV, optionally as an SVG heatmap
    Map {
        #[arg(allow_negative_numbers = true)]
        chi: f64,
        out: PathBuf,
        svg: Option<PathBuf>,
        #[command(flatten)]
        window: Window,
        #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
        resolution: f64,
        #[arg(long, default_value_t = C0_DEFAULT)]
        c0: f64,
    },
    /// Bisect for the largest chi that admits some (a, b) with phi < 0
    Chi0 {
        #[arg(long, default_value_t = C0_DEFAULT, allow_negative_numbers = true)]
        c0: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Run a simulation into a run directory
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-refinement study of the Hessian identities and inequalities
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
        sizes: Vec<usize>,
        /// Write the table here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the energy inequalities on a finished run
    Diagnose {
        run_dir: PathBuf,
        #[arg(allow_negative_numbers = true)]
        a: f64,
        #[arg(allow_negative_numbers = true)]
        b: f64,
        #[arg(allow_negative_numbers = true)]
        delta: Option<f64>,
        /// Window length for the gradient bound and the v floor; estimated from the run when absent
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Heat-kernel lower bound for v
    Eta {
        #[arg(allow_negative_numbers = true)]
        m: f64,
        #[arg(allow_negative_numbers = true)]
        inf_v0: f64,
        #[arg(allow_negative_numbers = true)]
        tau: f64,
        #[arg(allow_negative_numbers = true)]
        diam: f64,
    },
}

/// Exit status of a successfully parsed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
        }
    }
}

/// `0` prints as `0`, everything else with three significant digits.
pub fn format_phi(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.2e}")
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::Phi { a, b, chi, c0 } => cmd_phi(a, b, chi, c0, out),
        Command::Map {
            chi,
            out: csv_path,
            svg,
            window,
            resolution,
            c0,
        } => {
            let search = SearchConfig {
                a_min: window.a_min,
                a_max: window.a_max,
                b_min: window.b_min,
                b_max: window.b_max,
                resolution,
                ..SearchConfig::default()
            };
            cmd_map(chi, c0, &search, &csv_path, svg.as_deref(), out)
        }
        Command::Chi0 { c0, tol } => cmd_chi0(c0, tol, out),
        Command::Simulate { config, out: dir } => cmd_simulate(&config, &dir, out),
        Command::Verify { suite, sizes, out: path } => cmd_verify(&suite, &sizes, path.as_deref(), out),
        Command::Diagnose {
            run_dir,
            a,
            b,
            delta,
            tau,
        } => cmd_diagnose(&run_dir, a, b, delta, tau, out),
        Command::Eta { m, inf_v0, tau, diam } => {
            let eta = eta_lower_bound(&EtaInputs { m, inf_v0, tau, diam })?;
            writeln!(out, "{eta}")?;
            Ok(Outcome::Pass)
        }
    }
}

fn cmd_phi(a: f64, b: f64, chi: f64, c0: f64, out: &mut dyn Write) -> Result<Outcome> {
    let p = AdmissibilityParams::new(a, b, chi).with_c0(c0);
    let v = phi(&p)?;
    let e = phi_expanded(&p)?;
    writeln!(out, "{}", format_phi(v))?;
    writeln!(out, "expanded {}", format_phi(e))?;
    Ok(Outcome::Pass)
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_map(
    chi: f64,
    c0: f64,
    search: &SearchConfig,
    csv_path: &Path,
    svg: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let rows = phi_map(chi, c0, search)?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(create(csv_path)?));
    w.write_record(["a", "b", "phi"])?;
    for &(a, b, p) in &rows {
        w.write_record([format!("{a:?}"), format!("{b:?}"), format!("{p:e}")])?;
    }
    w.flush()?;
    let negative = rows.iter().filter(|r| r.2 < 0.0).count();
    if let Some(path) = svg {
        let nb = search.b_axis().len();
        fs::write(path, render_svg(&rows, nb, chi)).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
    }
    writeln!(out, "{} points, {negative} with phi < 0", rows.len())?;
    Ok(Outcome::Pass)
}

/// Largest heatmap side in cells.
const SVG_MAX_CELLS: usize = 200;

/// Heatmap of `sign(φ)` with `a` to the right and `b` upward. The input is
/// a-major with `nb` values of `b` per `a`; blocks are merged so that neither
/// side exceeds [`SVG_MAX_CELLS`], and a block counts as negative when any
/// of its points is.
pub fn render_svg(rows: &[(f64, f64, f64)], nb: usize, chi: f64) -> String {
    let na = rows.len() / nb.max(1);
    let (sa, sb) = (na.div_ceil(SVG_MAX_CELLS).max(1), nb.div_ceil(SVG_MAX_CELLS).max(1));
    let (ca, cb) = (na.div_ceil(sa), nb.div_ceil(sb));
    let cell = 3;
    let (w, h) = (ca * cell, cb * cell);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{}">"#,
        h + 20
    );
    let _ = writeln!(s, r#"<title>sign of phi at chi = {chi}</title>"#);
    for ia in 0..ca {
        for ib in 0..cb {
            let mut neg = false;
            let mut min = f64::INFINITY;
            for i in ia * sa..((ia + 1) * sa).min(na) {
                for j in ib * sb..((ib + 1) * sb).min(nb) {
                    let p = rows[i * nb + j].2;
                    neg |= p < 0.0;
                    min = min.min(p);
                }
            }
            let fill = if neg { "#1f4e9c" } else if min == 0.0 { "#bbbbbb" } else { "#f2e6d9" };
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{fill}"/>"#,
                ia * cell,
                (cb - 1 - ib) * cell
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="2" y="{}" font-size="12" font-family="sans-serif">blue: phi &lt; 0 (a right, b up)</text>"#,
        h + 15
    );
    s.push_str("</svg>\n");
    s
}

fn cmd_chi0(c0: f64, tol: f64, out: &mut dyn Write) -> Result<Outcome> {
    let z = chi_zero(c0, tol, &SearchConfig::default())?;
    writeln!(out, "chi0 {:.6}", z.estimate())?;
    writeln!(out, "bracket {:?} {:?}", z.lower, z.upper)?;
    writeln!(
        out,
        "witness a={:.6} b={:.6} phi={:e}",
        z.witness.best_a, z.witness.best_b, z.witness.best_phi
    )?;
    Ok(Outcome::from_pass(z.bracket_width() <= tol))
}

/// Provenance of a run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub version: String,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        format!(
            "command = {}\nconfig_path = {}\noutput_dir = {}\nseed = {}\nversion = {}\n",
            self.command,
            self.config_path.display(),
            self.output_dir.display(),
            self.seed,
            self.version
        )
    }
}

fn write_checkpoint(dir: &Path, step: usize, s: &State, chi: f64) -> Result<()> {
    let stem = format!("step_{step:08}");
    write_field_csv(&s.u, std::io::BufWriter::new(create(&dir.join(format!("{stem}_u.csv")))?))?;
    write_field_csv(&s.v, std::io::BufWriter::new(create(&dir.join(format!("{stem}_v.csv")))?))?;
    let g = s.grid();
    let meta = format!(
        "t = {:?}\nchi = {chi:?}\nnx = {}\nny = {}\nlx = {:?}\nly = {:?}\n",
        s.t, g.nx, g.ny, g.lx, g.ly
    );
    fs::write(dir.join(format!("{stem}_meta.txt")), meta)?;
    Ok(())
}

fn cmd_simulate(config_path: &Path, dir: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let text = fs::read_to_string(config_path).map_err(|source| Error::File {
        path: config_path.to_path_buf(),
        source,
    })?;
    let rc = RunConfig::parse(&text)?;
    let sim = Simulation::new(rc.sim.clone())?;

    let ckpt = dir.join("checkpoints");
    let reports = dir.join("reports");
    for d in [dir, &ckpt, &reports] {
        fs::create_dir_all(d).map_err(|source| Error::File {
            path: d.to_path_buf(),
            source,
        })?;
    }
    let manifest = RunManifest {
        command: "simulate".into(),
        config_path: config_path.to_path_buf(),
        output_dir: dir.to_path_buf(),
        seed: rc.seed,
        version: VERSION.into(),
    };
    fs::write(dir.join("manifest.txt"), manifest.to_text())?;
    fs::write(dir.join("config.txt"), rc.to_text())?;

    let n = rc.sim.steps();
    let every = rc.checkpoint_every;
    let chi = rc.sim.chi;
    let mut last = (0usize, None::<State>);
    let result = run_observed(sim, |k, s| {
        if k == 0 || (every > 0 && k % every == 0) {
            write_checkpoint(&ckpt, k, s, chi)?;
        }
        last = (k, Some(s.clone()));
        Ok(())
    })?;
    if let (k, Some(s)) = &last {
        if *k != 0 && (every == 0 || k % every != 0) {
            write_checkpoint(&ckpt, *k, s, chi)?;
        }
    }

    write_series_csv(&result.series, std::io::BufWriter::new(create(&dir.join("series.csv"))?))?;
    let drift = max_mass_drift(&result.series);
    let completed = result.aborted.is_none();
    let mut summary = String::from("key,value\n");
    let _ = writeln!(summary, "steps_planned,{n}");
    let _ = writeln!(summary, "steps_completed,{}", last.0);
    let _ = writeln!(summary, "final_t,{:?}", result.final_state.t);
    let _ = writeln!(summary, "max_mass_drift,{drift:e}");
    let _ = writeln!(summary, "min_v,{:e}", result.series.iter().map(|r| r.min_v).fold(f64::INFINITY, f64::min));
    let _ = writeln!(summary, "max_u,{:e}", result.series.iter().map(|r| r.max_u).fold(0.0, f64::max));
    let _ = writeln!(
        summary,
        "aborted,{}",
        result.aborted.as_ref().map_or(String::new(), |e| format!("\"{}\"", e.to_string().replace('"', "'")))
    );
    fs::write(reports.join("run_summary.csv"), summary)?;

    writeln!(out, "wrote {} records to {}", result.series.len(), dir.display())?;
    if let Some(e) = &result.aborted {
        writeln!(out, "run aborted: {e}")?;
    }
    Ok(Outcome::from_pass(completed && drift <= MASS_DRIFT_TOL))
}

fn cmd_verify(suite: &str, sizes: &[usize], path: Option<&Path>, out: &mut dyn Write) -> Result<Outcome> {
    let suite: Suite = suite.parse()?;
    let rows = run_suite(suite, sizes)?;
    match path {
        Some(p) => write_table(&rows, std::io::BufWriter::new(create(p)?))?,
        None => write_table(&rows, &mut *out)?,
    }
    for r in rows.iter().filter(|r| r.order.is_none() && sizes.len() == 1).take(1) {
        writeln!(out, "order: n/a (single size {})", r.n)?;
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    writeln!(out, "{} checks, {failed} failed", rows.len())?;
    Ok(Outcome::from_pass(failed == 0))
}

fn cmd_diagnose(
    run_dir: &Path,
    a: f64,
    b: f64,
    delta: Option<f64>,
    tau: Option<f64>,
    out: &mut dyn Write,
) -> Result<Outcome> {
    if !run_dir.is_dir() {
        return Err(Error::File {
            path: run_dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "run directory not found"),
        });
    }
    let cfg_path = run_dir.join("config.txt");
    let text = fs::read_to_string(&cfg_path).map_err(|source| Error::File { path: cfg_path, source })?;
    let rc = RunConfig::parse(&text)?;
    if a != rc.sim.a {
        return Err(Error::Precondition(format!(
            "the run recorded the v power for a = {}, got a = {a}",
            rc.sim.a
        )));
    }
    let series = read_series_csv(open(&run_dir.join("series.csv"))?)?;
    if series.len() < 2 {
        return Err(Error::Precondition("series has fewer than two samples".into()));
    }
    let p = AdmissibilityParams::new(a, b, rc.sim.chi);
    let dcfg = DissipationConfig {
        delta,
        ..DissipationConfig::default()
    };
    let verdict = check_dissipation(&series, &p, &dcfg)?;
    let lower = check_lower_bound(&series, &p)?;
    let drift = max_mass_drift(&series);
    let tau = match tau {
        Some(t) => t,
        None => estimate_tau(&series)?,
    };
    let grad = check_gradient_bound(&series, tau).ok();
    let eta = eta_lower_bound(&EtaInputs {
        m: series[0].mass,
        inf_v0: series[0].min_v,
        tau,
        diam: rc.sim.grid.diameter(),
    })?;
    let v_floor_ok = check_v_floor(&series, eta);

    let mut lines: Vec<(String, String, Option<bool>)> = vec![
        ("mass_drift".into(), format!("{drift:e}"), Some(drift <= MASS_DRIFT_TOL)),
        (
            "dissipation".into(),
            format!(
                "kappa={:e} delta={:e} c={:e} max_violation={:e} samples={}",
                verdict.kappa, verdict.delta, verdict.c, verdict.max_violation, verdict.n_samples
            ),
            Some(verdict.pass),
        ),
        (
            "lower_bound".into(),
            format!("violations={} min_slack={:e} gamma={:e}", lower.violations, lower.min_slack, lower.gamma),
            Some(lower.violations == 0),
        ),
        ("transfer".into(), format!("gamma={:e}", lower.gamma), Some(lower.transfer_holds)),
    ];
    match grad {
        Some(g) => lines.push((
            "gradient_bound".into(),
            format!("tau={tau:e} measured={:e} ceiling={:e}", g.max_measured, g.z0 + g.bound),
            Some(g.holds),
        )),
        None => lines.push(("gradient_bound".into(), format!("tau={tau:e} window does not fit"), None)),
    }
    lines.push(("v_floor".into(), format!("eta={eta:e} tau={tau:e} holds={v_floor_ok}"), None));

    let reports = run_dir.join("reports");
    fs::create_dir_all(&reports)?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(create(&reports.join("diagnose.csv"))?));
    w.write_record(["check", "detail", "verdict"])?;
    let mut pass = true;
    for (name, detail, verdict) in &lines {
        let v = match verdict {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "info",
        };
        pass &= verdict.unwrap_or(true);
        w.write_record([name.as_str(), detail.as_str(), v])?;
        writeln!(out, "{name:<15} {v:<5} {detail}")?;
    }
    w.flush()?;
    Ok(Outcome::from_pass(pass))
}
