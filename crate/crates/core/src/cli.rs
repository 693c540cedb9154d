//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::{load_config, ConfigError, RunConfig};
use crate::integrator::{integrate, IntegratorError, Trajectory};
use crate::model::{BankModel, Region};
use crate::output::{format_g15, trajectory_csv, write_text, OutputError};
use crate::regulation::{reserve_series, RegulationError};
use crate::scenario::{compare_sets, run_set, ScenarioResult, ScenarioSet};
use crate::svg::{render_svg_lines, Chart, Guide, Series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "bankdyn",
    version,
    about = "Bank balance-sheet dynamics under sinusoidal rates"
)]
pub struct Cli {
    /// Run configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    pub svg: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the singularity loci and the t = 0 region boundaries.
    Loci,
    /// Integrate one trajectory.
    Simulate {
        #[arg(long, allow_negative_numbers = true)]
        d0: f64,
        #[arg(long, allow_negative_numbers = true)]
        l0: f64,
    },
    /// Run scenario sets and compare them.
    Sweep {
        /// Set name, comma-separated names, or `all`.
        #[arg(long, default_value = "all")]
        set: String,
    },
    /// Reserve reports and integrated LDR reserve per scenario.
    Gwm {
        #[arg(long, default_value = "all")]
        set: String,
    },
    /// Behaviour diagnoses per scenario.
    Validate {
        #[arg(long, default_value = "all")]
        set: String,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("cannot write to stdout: {0}")]
    Stdout(#[from] std::io::Error),
}

impl From<IntegratorError> for CliError {
    fn from(e: IntegratorError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<RegulationError> for CliError {
    fn from(e: RegulationError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    match &cli.command {
        Command::Loci => loci(&cfg, out),
        Command::Simulate { d0, l0 } => simulate(cli, &cfg, *d0, *l0, out),
        Command::Sweep { set } => sweep(cli, &cfg, set, out),
        Command::Gwm { set } => gwm(cli, &cfg, set, out),
        Command::Validate { set } => validate(cli, &cfg, set, out),
    }
}

fn loci(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let model = cfg.model();
    let loci = model
        .singularity_loci()
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    writeln!(out, "locus,c0,sin,cos,freq,boundary_t0")?;
    for (name, c) in [("deposit", &loci.deposit), ("loan", &loci.loan)] {
        writeln!(
            out,
            "{name},{},{},{},{},{}",
            format_g15(c.c0),
            format_g15(c.cs),
            format_g15(c.cc),
            format_g15(c.freq),
            format_g15(c.boundary_volume(0.0))
        )?;
    }
    let (lo, hi) = ordered(
        loci.deposit.boundary_volume(0.0),
        loci.loan.boundary_volume(0.0),
    );
    writeln!(
        out,
        "regions at t=0: 1 if D+L < {}, 2 if {} < D+L < {}, 3 if D+L > {}",
        format_g15(lo),
        format_g15(lo),
        format_g15(hi),
        format_g15(hi)
    )?;
    Ok(EXIT_OK)
}

fn ordered(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn region_label(r: &Result<Region, crate::model::ModelError>) -> String {
    match r {
        Ok(region) => region.index().to_string(),
        Err(_) => "on-locus".into(),
    }
}

fn ldr_guides(cfg: &RunConfig) -> Vec<Guide> {
    vec![
        Guide {
            label: format!("lambda_l = {}", format_g15(cfg.regulation.lambda_l)),
            y: cfg.regulation.lambda_l,
        },
        Guide {
            label: format!("lambda_u = {}", format_g15(cfg.regulation.lambda_u)),
            y: cfg.regulation.lambda_u,
        },
    ]
}

fn write_chart(path: &Path, chart: Chart) -> Result<(), CliError> {
    render_svg_lines(&chart, path)?;
    Ok(())
}

fn simulate(
    cli: &Cli,
    cfg: &RunConfig,
    d0: f64,
    l0: f64,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let model = cfg.model();
    let start = crate::model::BankState::new(0.0, d0, l0);
    let traj = integrate(&model, start, &cfg.integrator)?;
    let report = reserve_series(&model.params, &cfg.regulation, &traj)?;
    let csv_path = cli.out_dir.join("simulate.csv");
    write_text(&csv_path, &trajectory_csv(&model, &traj, &report)?)?;
    if cli.svg {
        write_trajectory_charts(cli, cfg, &model, &traj, "simulate")?;
    }
    let last = traj.last();
    writeln!(out, "termination: {}", traj.termination)?;
    writeln!(
        out,
        "samples: {}  t_final: {}  D: {}  L: {}",
        traj.samples.len(),
        format_g15(last.t),
        format_g15(last.deposits),
        format_g15(last.loans)
    )?;
    for e in &traj.events {
        writeln!(
            out,
            "event: {} locus at t = {} (D = {}, L = {}, |alpha| = {})",
            e.which,
            format_g15(e.t_star),
            format_g15(e.deposits),
            format_g15(e.loans),
            format_g15(e.residual)
        )?;
    }
    writeln!(
        out,
        "integrated gwm_ldr: {}",
        format_g15(report.integrated_gwm)
    )?;
    writeln!(out, "wrote {}", csv_path.display())?;
    Ok(if traj.termination.is_runtime_failure() {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    })
}

fn write_trajectory_charts(
    cli: &Cli,
    cfg: &RunConfig,
    model: &BankModel,
    traj: &Trajectory,
    stem: &str,
) -> Result<(), CliError> {
    let pick = |f: &dyn Fn(&crate::model::BankState) -> f64| -> Vec<(f64, f64)> {
        traj.samples.iter().map(|s| (s.t, f(s))).collect()
    };
    let rates = &model.rates;
    write_chart(
        &cli.out_dir.join(format!("{stem}_volumes.svg")),
        Chart {
            title: "Volumes".into(),
            x_label: "t (years)".into(),
            y_label: "volume".into(),
            series: vec![
                Series::new("D", pick(&|s| s.deposits)),
                Series::new("L", pick(&|s| s.loans)),
            ],
            guides: vec![],
        },
    )?;
    write_chart(
        &cli.out_dir.join(format!("{stem}_rates.svg")),
        Chart {
            title: "Rates".into(),
            x_label: "t (years)".into(),
            y_label: "rate".into(),
            series: vec![
                Series::new("r_D", pick(&|s| rates.deposit.value(s.t))),
                Series::new("r_L", pick(&|s| rates.loan.value(s.t))),
                Series::new("r", pick(&|s| rates.interbank.value(s.t))),
            ],
            guides: vec![],
        },
    )?;
    write_chart(
        &cli.out_dir.join(format!("{stem}_phase.svg")),
        Chart {
            title: "Phase plot".into(),
            x_label: "D".into(),
            y_label: "L".into(),
            series: vec![Series::new(
                "L vs D",
                traj.samples.iter().map(|s| (s.deposits, s.loans)).collect(),
            )],
            guides: vec![],
        },
    )?;
    write_chart(
        &cli.out_dir.join(format!("{stem}_ldr.svg")),
        Chart {
            title: "Loan-to-deposit ratio".into(),
            x_label: "t (years)".into(),
            y_label: "lambda".into(),
            series: vec![Series::new("lambda", pick(&|s| s.loans / s.deposits))],
            guides: ldr_guides(cfg),
        },
    )?;
    Ok(())
}

fn select_sets(cfg: &RunConfig, spec: &str) -> Result<Vec<ScenarioSet>, CliError> {
    let sets = cfg.scenario.sets()?;
    if spec == "all" {
        return Ok(sets);
    }
    spec.split(',')
        .map(|name| {
            let name = name.trim();
            sets.iter()
                .find(|s| s.name == name)
                .cloned()
                .ok_or_else(|| {
                    let known: Vec<&str> = sets.iter().map(|s| s.name.as_str()).collect();
                    CliError::Invalid(format!(
                        "unknown set `{name}` (known: {}, all)",
                        known.join(", ")
                    ))
                })
        })
        .collect()
}

fn run_sets(cfg: &RunConfig, sets: &[ScenarioSet]) -> Vec<Vec<ScenarioResult>> {
    let model = cfg.model();
    sets.iter()
        .map(|set| {
            run_set(
                &model,
                &cfg.regulation,
                set,
                &cfg.integrator,
                cfg.scenario.theta,
            )
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(format_g15).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn summary_csv(results: &[ScenarioResult]) -> String {
    let mut s = String::from(
        "label,ratio,D0,L0,region,termination,samples,t_final,event_locus,event_t,integrated_gwm,verdict,error\n",
    );
    for r in results {
        let traj = r.trajectory.as_ref();
        let event = traj.and_then(|t| t.events.first());
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.label,
            format_g15(r.ratio),
            format_g15(r.initial.deposits),
            format_g15(r.initial.loans),
            region_label(&r.region),
            r.termination().map(|t| t.to_string()).unwrap_or_default(),
            traj.map(|t| t.samples.len()).unwrap_or(0),
            opt(traj.map(|t| t.last().t)),
            event.map(|e| e.which.to_string()).unwrap_or_default(),
            opt(event.map(|e| e.t_star)),
            opt(r.report.as_ref().map(|rep| rep.integrated_gwm)),
            r.verdict(),
            csv_text(r.error.as_deref().unwrap_or(""))
        ));
    }
    s
}

fn set_charts(
    cli: &Cli,
    cfg: &RunConfig,
    set: &ScenarioSet,
    results: &[ScenarioResult],
) -> Result<(), CliError> {
    let dir = cli.out_dir.join(&set.name);
    let with_traj = || {
        results
            .iter()
            .filter_map(|r| r.trajectory.as_ref().map(|t| (r, t)))
    };
    write_chart(
        &dir.join("phase.svg"),
        Chart {
            title: format!("{}: L against D", set.name),
            x_label: "D".into(),
            y_label: "L".into(),
            series: with_traj()
                .map(|(r, t)| {
                    Series::new(
                        &r.label,
                        t.samples.iter().map(|s| (s.deposits, s.loans)).collect(),
                    )
                })
                .collect(),
            guides: vec![],
        },
    )?;
    write_chart(
        &dir.join("ldr.svg"),
        Chart {
            title: format!("{}: loan-to-deposit ratio", set.name),
            x_label: "t (years)".into(),
            y_label: "lambda".into(),
            series: with_traj()
                .map(|(r, t)| {
                    Series::new(
                        &r.label,
                        t.samples
                            .iter()
                            .map(|s| (s.t, s.loans / s.deposits))
                            .collect(),
                    )
                })
                .collect(),
            guides: ldr_guides(cfg),
        },
    )?;
    write_gwm_chart(&dir.join("gwm.svg"), set, results)
}

fn write_gwm_chart(
    path: &Path,
    set: &ScenarioSet,
    results: &[ScenarioResult],
) -> Result<(), CliError> {
    write_chart(
        path,
        Chart {
            title: format!("{}: LDR reserve", set.name),
            x_label: "t (years)".into(),
            y_label: "gwm_ldr".into(),
            series: results
                .iter()
                .filter_map(|r| {
                    r.report.as_ref().map(|rep| {
                        Series::new(
                            &r.label,
                            rep.rows.iter().map(|row| (row.t, row.gwm_ldr)).collect(),
                        )
                    })
                })
                .collect(),
            guides: vec![],
        },
    )
}

fn any_failure(all: &[Vec<ScenarioResult>]) -> bool {
    all.iter().flatten().any(|r| r.is_runtime_failure())
}

fn sweep(cli: &Cli, cfg: &RunConfig, spec: &str, out: &mut dyn Write) -> Result<i32, CliError> {
    let sets = select_sets(cfg, spec)?;
    let model = cfg.model();
    let all = run_sets(cfg, &sets);
    for (set, results) in sets.iter().zip(&all) {
        let dir = cli.out_dir.join(&set.name);
        for r in results {
            if let (Some(traj), Some(rep)) = (&r.trajectory, &r.report) {
                write_text(
                    &dir.join(format!("{}.csv", r.label)),
                    &trajectory_csv(&model, traj, rep)?,
                )?;
            }
        }
        write_text(&dir.join("summary.csv"), &summary_csv(results))?;
        if cli.svg {
            set_charts(cli, cfg, set, results)?;
        }
        let done = results.iter().filter(|r| !r.is_runtime_failure()).count();
        writeln!(
            out,
            "{} (D0 = {}): {} of {} scenarios reached t_end",
            set.name,
            format_g15(set.d0),
            done,
            results.len()
        )?;
    }
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let rows =
                compare_sets(&all[i], &all[j]).map_err(|e| CliError::Invalid(e.to_string()))?;
            let mut s = String::from(
                "label,ldr_a,ldr_b,D0_a,D0_b,integrated_gwm_a,integrated_gwm_b,difference,lambda_min_a,lambda_max_a,lambda_min_b,lambda_max_b\n",
            );
            for row in rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    row.label,
                    format_g15(row.initial_ldr_a),
                    format_g15(row.initial_ldr_b),
                    format_g15(sets[i].d0),
                    format_g15(sets[j].d0),
                    opt(row.integrated_gwm_a),
                    opt(row.integrated_gwm_b),
                    opt(row.difference),
                    opt(row.lambda_range_a.map(|r| r.0)),
                    opt(row.lambda_range_a.map(|r| r.1)),
                    opt(row.lambda_range_b.map(|r| r.0)),
                    opt(row.lambda_range_b.map(|r| r.1)),
                ));
            }
            let path = cli
                .out_dir
                .join(format!("comparison_{}_{}.csv", sets[i].name, sets[j].name));
            write_text(&path, &s)?;
            writeln!(out, "wrote {}", path.display())?;
        }
    }
    Ok(if any_failure(&all) {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    })
}

fn gwm(cli: &Cli, cfg: &RunConfig, spec: &str, out: &mut dyn Write) -> Result<i32, CliError> {
    let sets = select_sets(cfg, spec)?;
    let all = run_sets(cfg, &sets);
    let mut s =
        String::from("set,label,ratio,D0,L0,termination,integrated_gwm,lambda_min,lambda_max\n");
    for (set, results) in sets.iter().zip(&all) {
        for r in results {
            let range = r.report.as_ref().map(|rep| rep.lambda_range());
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                set.name,
                r.label,
                format_g15(r.ratio),
                format_g15(r.initial.deposits),
                format_g15(r.initial.loans),
                r.termination().map(|t| t.to_string()).unwrap_or_default(),
                opt(r.report.as_ref().map(|rep| rep.integrated_gwm)),
                opt(range.map(|x| x.0)),
                opt(range.map(|x| x.1)),
            ));
        }
        if cli.svg {
            write_gwm_chart(
                &cli.out_dir.join(format!("gwm_{}.svg", set.name)),
                set,
                results,
            )?;
        }
    }
    let path = cli.out_dir.join("gwm.csv");
    write_text(&path, &s)?;
    out.write_all(s.as_bytes())?;
    Ok(if any_failure(&all) {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    })
}

fn validate(cli: &Cli, cfg: &RunConfig, spec: &str, out: &mut dyn Write) -> Result<i32, CliError> {
    let sets = select_sets(cfg, spec)?;
    let all = run_sets(cfg, &sets);
    let mut s = String::from(
        "set,label,ratio,termination,loan_corr,deposit_corr,loan_ok,deposit_ok,verdict,note\n",
    );
    for (set, results) in sets.iter().zip(&all) {
        for r in results {
            let (lc, dc, lok, dok, note) = match &r.diagnosis {
                Ok(d) => (
                    format_g15(d.loan_corr),
                    format_g15(d.deposit_corr),
                    d.loan_ok.to_string(),
                    d.deposit_ok.to_string(),
                    String::new(),
                ),
                Err(e) => (
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.to_string(),
                ),
            };
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                set.name,
                r.label,
                format_g15(r.ratio),
                r.termination().map(|t| t.to_string()).unwrap_or_default(),
                lc,
                dc,
                lok,
                dok,
                r.verdict(),
                csv_text(&note)
            ));
        }
    }
    let path = cli.out_dir.join("validate.csv");
    write_text(&path, &s)?;
    out.write_all(s.as_bytes())?;
    Ok(if any_failure(&all) {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run(args.iter().copied(), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn loci_prints_coefficients() {
        let (code, text) = run_capture(&["bankdyn", "loci"]);
        assert_eq!(code, 0);
        assert!(
            text.contains("deposit,0.01515,-0.01145,0,1,1.515"),
            "{text}"
        );
        assert!(text.contains("loan,0.0548,-0.0092,0.03,1,8.48"), "{text}");
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run_capture(&["bankdyn", "--bogus", "loci"]).0, EXIT_USAGE);
        assert_eq!(
            run_capture(&["bankdyn", "simulate", "--d0", "1"]).0,
            EXIT_USAGE
        );
        assert_eq!(run_capture(&["bankdyn", "frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["bankdyn", "--help"]).0, EXIT_OK);
    }

    #[test]
    fn bad_config_exits_1() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.ini");
        std::fs::write(&cfg, "[params]\nkappa1 = 0.5\nkappa2 = 0.4\ndelta = 0.2\n").unwrap();
        let (code, _) = run_capture(&["bankdyn", "--config", cfg.to_str().unwrap(), "loci"]);
        assert_eq!(code, EXIT_INVALID);
        let missing = dir.path().join("missing.ini");
        let (code, _) = run_capture(&["bankdyn", "--config", missing.to_str().unwrap(), "loci"]);
        assert_eq!(code, EXIT_INVALID);
    }

    #[test]
    fn simulate_writes_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("short.ini");
        std::fs::write(&cfg, "[integrator]\nt_end = 0.05\n").unwrap();
        let out = dir.path().join("out");
        let (code, _) = run_capture(&[
            "bankdyn",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--svg",
            "simulate",
            "--d0",
            "10",
            "--l0",
            "20",
        ]);
        assert_eq!(code, 0);
        let csv = std::fs::read_to_string(out.join("simulate.csv")).unwrap();
        let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(first[8], "2");
        assert_eq!(first[9], "2");
        let ldr = std::fs::read_to_string(out.join("simulate_ldr.svg")).unwrap();
        assert!(ldr.contains("lambda_l = 0.78") && ldr.contains("lambda_u = 1"));
        assert!(out.join("simulate_phase.svg").exists());
    }

    #[test]
    fn simulate_rejects_bad_start() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _) = run_capture(&[
            "bankdyn",
            "--out-dir",
            dir.path().to_str().unwrap(),
            "simulate",
            "--d0",
            "-1",
            "--l0",
            "2",
        ]);
        assert_eq!(code, EXIT_INVALID);
    }

    #[test]
    fn unknown_set_exits_1() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _) = run_capture(&[
            "bankdyn",
            "--out-dir",
            dir.path().to_str().unwrap(),
            "sweep",
            "--set",
            "set9",
        ]);
        assert_eq!(code, EXIT_INVALID);
    }

    #[test]
    fn sweep_set1_hits_loci_with_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let (code, _) = run_capture(&[
            "bankdyn",
            "--out-dir",
            out.to_str().unwrap(),
            "sweep",
            "--set",
            "set1",
        ]);
        assert_eq!(code, EXIT_RUNTIME);
        let summary = std::fs::read_to_string(out.join("set1/summary.csv")).unwrap();
        assert!(summary.contains(",singular,"), "{summary}");
        assert!(out.join("set1/A.csv").exists());
    }
}
