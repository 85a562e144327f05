//! Batch front-end: `vardisc <command> --config FILE [--out DIR] ...`.
//!
//! Every run writes `report.json`; solves and limits also write
//! `values.csv`, and `--trace-csv` adds `trace.csv`. Exit status is 0 on
//! success, 2 when a checked property fails and 1 on errors.

pub mod config;

use crate::applications::check_translation;
use crate::discounts::{check_assumption_limits, verify_discount};
use crate::ergodic::{max_mean_cycle, ActionGraph};
use crate::limits::{default_schedule, eigenpair_limit, subaction_limit, LimitOptions};
use crate::operators::{
    fixed_point, koopman_fixed_point, sample_histories, FixedPointOptions, HistorySet, Operator,
    ValueFunction,
};
use crate::process::{DecisionProcess, StateSpace};
use crate::regularity::{regularity_report, LipschitzOptions};
use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use config::Config;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    SolveBellman,
    SolveTransfer,
    SolveKoopman,
    LimitSubaction,
    LimitEigenpair,
    VerifyDiscount,
    VerifyRegularity,
    OracleCycle,
    CheckTranslation,
}

impl Command {
    fn name(self) -> String {
        self.to_possible_value()
            .map(|v| v.get_name().to_string())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "vardisc",
    version,
    about = "Fixed points and vanishing-discount limits for processes with variable discounting"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Fixed-point tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Comma separated discount-family indices, e.g. "2,4,8".
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<u32>>,
    /// Leave version and timestamp out of the report.
    #[arg(long)]
    pub no_meta: bool,
    #[arg(long)]
    pub trace_csv: bool,
}

/// What a run produced, before anything is written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub passed: bool,
    /// `(file name, contents)` besides the report.
    pub files: Vec<(&'static str, String)>,
}

const DEFAULT_LIMIT_TOL: f64 = 1e-4;

fn fixed_point_options(cli: &Cli, cfg: &Config) -> FixedPointOptions {
    let default_tol = if cfg.is_grid() { 1e-8 } else { 1e-10 };
    FixedPointOptions {
        tol: cli.tol.or(cfg.solver.tol).unwrap_or(default_tol),
        max_iter: cli
            .max_iter
            .or(cfg.solver.max_iter)
            .unwrap_or(FixedPointOptions::default().max_iter),
        keep_trace: cli.trace_csv,
    }
}

fn limit_options(cli: &Cli, cfg: &Config) -> LimitOptions {
    LimitOptions {
        schedule: cli
            .schedule
            .clone()
            .or_else(|| cfg.limit.schedule.clone())
            .unwrap_or_else(default_schedule),
        tol: cfg.limit.tol.unwrap_or(DEFAULT_LIMIT_TOL),
        fixed_point: FixedPointOptions {
            keep_trace: false,
            ..fixed_point_options(cli, cfg)
        },
        extrapolate: cfg.limit.extrapolate,
    }
}

fn values_csv(space: StateSpace, v: &ValueFunction) -> String {
    let mut s = String::new();
    match space {
        StateSpace::UnitGrid { nodes, .. } => {
            s.push_str("state,x,value\n");
            for (i, x) in v.values.iter().enumerate() {
                s.push_str(&format!("{i},{},{x}\n", StateSpace::node_coord(nodes, i)));
            }
        }
        _ => {
            s.push_str("state,value\n");
            for (i, x) in v.values.iter().enumerate() {
                s.push_str(&format!("{i},{x}\n"));
            }
        }
    }
    s
}

fn shift_if_negative(p: &DecisionProcess) -> (DecisionProcess, f64) {
    if p.reward_min() < 0.0 {
        p.shift_to_nonnegative()
    } else {
        (p.clone(), 0.0)
    }
}

fn outputs_label(shift: f64) -> &'static str {
    if shift == 0.0 {
        "un-shifted"
    } else {
        "shifted"
    }
}

/// Runs one command without touching the file system beyond reading the
/// config.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    let cfg = Config::load(&cli.config)?;
    let mut files = Vec::new();
    let (result, shift, outputs, passed) = match cli.command {
        Command::SolveBellman | Command::SolveTransfer => {
            let op = if cli.command == Command::SolveBellman {
                Operator::Bellman
            } else {
                Operator::Transfer
            };
            let p = cfg.build_process()?;
            let r = fixed_point(op, &p, None, &fixed_point_options(cli, &cfg))?;
            files.push(("values.csv", values_csv(p.space(), &r.solution)));
            if cli.trace_csv {
                files.push(("trace.csv", r.stats.trace_csv()));
            }
            let ok = r.stats.contraction_ok();
            let out = json!({
                "operator": op.to_string(),
                "solution": r.solution.values,
                "iterations": r.iterations(),
                "residual": r.final_residual(),
                "certified_bound": r.certified_bound(),
                "max_contraction_ratio": r.stats.max_contraction_ratio,
            });
            (out, r.shift, outputs_label(r.shift), ok)
        }
        Command::SolveKoopman => {
            let (p, shift) = shift_if_negative(&cfg.build_process()?);
            let k = &cfg.koopman;
            let origins: Vec<_> = k.origins.iter().map(|&i| p.space().point(i)).collect();
            let hs = sample_histories(&p, &origins, k.horizon, k.count, k.seed)?;
            let set = HistorySet::new(hs);
            let r = koopman_fixed_point(&p, &set, &fixed_point_options(cli, &cfg))?;
            let values = r.values.at_histories(&set);
            let mut csv = String::from("history,value\n");
            for (i, v) in values.iter().enumerate() {
                csv.push_str(&format!("{i},{v}\n"));
            }
            files.push(("values.csv", csv));
            if cli.trace_csv {
                files.push(("trace.csv", r.stats.trace_csv()));
            }
            let histories: Vec<Value> = set
                .histories()
                .iter()
                .zip(&values)
                .map(|(h, v)| json!({ "origin": h.origin, "actions": h.actions, "value": v }))
                .collect();
            let out = json!({
                "histories": histories,
                "iterations": r.stats.iterations,
                "residual": r.stats.final_residual,
                "utility_bound": r.utility_bound,
                "tail_bound": r.tail_bound,
            });
            (out, shift, outputs_label(shift), r.stats.contraction_ok())
        }
        Command::LimitSubaction | Command::LimitEigenpair => {
            let p = cfg.build_process()?;
            let fam = cfg.family.build()?;
            let opts = limit_options(cli, &cfg);
            let r = if cli.command == Command::LimitSubaction {
                subaction_limit(&p, &fam, &opts)?
            } else {
                eigenpair_limit(&p, &fam, &opts)?
            };
            files.push(("values.csv", values_csv(p.space(), &r.limit_function)));
            if cli.trace_csv {
                files.push(("trace.csv", r.diagnostics_csv()));
            }
            let shift = r.shift_record;
            let ok = r.calibrated;
            (
                serde_json::to_value(&r)?,
                shift,
                "ubar_sequence and rows are shifted; limit_value, eigenvalue and limit_function are un-shifted",
                ok,
            )
        }
        Command::VerifyDiscount => {
            let d = cfg.discount()?;
            let rep = verify_discount(&d, &cfg.verify.sample_spec());
            let fam = cfg.family.build()?;
            let ns = limit_options(cli, &cfg).schedule;
            let t_max = cfg.verify.upper;
            let ts: Vec<f64> = (0..=64).map(|i| t_max * i as f64 / 64.0).collect();
            let (fam_rep, deviations) = check_assumption_limits(&fam, &[1.0], &ts, &ns, 0.05)?;
            // only the last member has to be near a translation
            let last = format!(
                "near-identity[n={},alpha=1]",
                ns.last().copied().unwrap_or(1)
            );
            let calibrated = fam_rep
                .get("non-increasing[alpha=1]")
                .is_some_and(|c| c.passed)
                && fam_rep.get(&last).is_some_and(|c| c.passed);
            let ok = rep.passed() && calibrated;
            let out = json!({
                "discount": rep,
                "family": fam_rep,
                "family_calibrated": calibrated,
                "translation_deviations": deviations,
            });
            (out, 0.0, "un-shifted", ok)
        }
        Command::VerifyRegularity => {
            let p = cfg.build_process()?;
            let rc = &cfg.regularity;
            let lip = LipschitzOptions {
                alpha: rc.alpha,
                lambda: rc.lambda,
                reward_constant: rc.reward_constant,
                ..Default::default()
            };
            let r = regularity_report(&p, &fixed_point_options(cli, &cfg), &lip, rc.slack)?;
            let shift = if p.reward_min() < 0.0 {
                -p.reward_min()
            } else {
                0.0
            };
            let ok = r.passed();
            (serde_json::to_value(&r)?, shift, outputs_label(shift), ok)
        }
        Command::OracleCycle => {
            let p = cfg.build_process()?;
            let g = ActionGraph::from_process(&p)?;
            let r = max_mean_cycle(&g)?;
            if cli.trace_csv {
                files.push(("trace.csv", r.to_csv()));
            }
            let out = json!({ "value": r.value, "cycle": r.cycle });
            (out, 0.0, "un-shifted", true)
        }
        Command::CheckTranslation => {
            let t = cfg.translation()?;
            let fam = cfg.family.build()?;
            let r = check_translation(
                t.nodes,
                &t.potential,
                &fam,
                &limit_options(cli, &cfg),
                t.tol,
            )?;
            let ok = r.report.passed();
            (serde_json::to_value(&r)?, 0.0, "un-shifted", ok)
        }
    };
    let mut report = json!({
        "command": cli.command.name(),
        "config": cfg,
        "flags": {
            "tol": cli.tol,
            "max_iter": cli.max_iter,
            "schedule": cli.schedule,
            "trace_csv": cli.trace_csv,
        },
        "shift": shift,
        "outputs": outputs,
        "passed": passed,
        "result": result,
    });
    if !cli.no_meta {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        report["meta"] = json!({ "version": env!("CARGO_PKG_VERSION"), "timestamp": stamp });
    }
    Ok(Outcome {
        report,
        passed,
        files,
    })
}

fn write_outcome(dir: &Path, o: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut text = serde_json::to_string_pretty(&o.report)?;
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)?;
    for (name, body) in &o.files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Executes and writes artifacts; returns the exit status.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli).and_then(|o| write_outcome(&cli.out, &o).map(|_| o)) {
        Ok(o) if o.passed => {
            println!("{}: ok", cli.command.name());
            0
        }
        Ok(_) => {
            eprintln!("{}: property violated, see report.json", cli.command.name());
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                1
            } else {
                0
            }
        }
    }
}
