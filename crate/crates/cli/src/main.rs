use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use nls_dpg::study::{self, RunConfig};
use nls_dpg::{DpgError, Result};

#[derive(Parser, Debug)]
#[command(name = "nls-dpg", version, about = "Space-time DPG solver for the modified NLS model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON run configuration; flags below override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["hyperbolic", "elliptic"])]
    regime: Option<String>,
    #[arg(long, global = true, value_parser = ["soliton1", "soliton2", "gaussian_beam"])]
    case: Option<String>,
    #[arg(long, global = true)]
    p: Option<usize>,
    #[arg(long, global = true)]
    c: Option<f64>,
    #[arg(long, global = true)]
    refinements: Option<usize>,
    /// Dörfler fraction; creates an adapt section with defaults if needed.
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve on the finest mesh of the sequence and print a summary.
    Solve {
        /// Also write the trace system matrix as `row,col,re,im`.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Uniform convergence table.
    Convergence,
    /// Convergence tables for each configured `c` (elliptic only).
    Cstudy,
    /// Adaptive refinement history.
    Adapt,
    /// Raster of `u` on the finest mesh of the sequence.
    Dump {
        /// Sample the exact field instead of solving.
        #[arg(long)]
        exact: bool,
    },
}

fn default_adapt() -> Value {
    json!({ "theta": 0.5, "max_steps": 10, "dof_budget": 200000, "policy": "tau_only" })
}

fn build_config(o: &Overrides) -> Result<RunConfig> {
    let mut v = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<Value>(&text).map_err(|e| DpgError::Config(e.to_string()))?
        }
        None => Value::Object(Map::new()),
    };
    let obj = v.as_object_mut().ok_or_else(|| DpgError::Config("configuration must be a JSON object".into()))?;
    if let Some(r) = &o.regime {
        obj.insert("regime".into(), json!(r));
    }
    if let Some(c) = &o.case {
        obj.insert("case".into(), json!(c));
    }
    if let Some(p) = o.p {
        obj.insert("p".into(), json!(p));
    }
    if let Some(c) = o.c {
        obj.insert("c".into(), json!(c));
    }
    if let Some(k) = o.refinements {
        obj.insert("refinements".into(), json!(k));
    }
    if let Some(t) = o.theta {
        let adapt = obj.entry("adapt").or_insert_with(default_adapt);
        if adapt.is_null() {
            *adapt = default_adapt();
        }
        adapt
            .as_object_mut()
            .ok_or_else(|| DpgError::Config("adapt must be an object".into()))?
            .insert("theta".into(), json!(t));
    }
    if let Some(out) = &o.out {
        obj.insert("output".into(), json!(out));
    }
    RunConfig::from_json(&v.to_string())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(v: &Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

/// `dir/stem_c<c>.csv` next to `base`.
fn c_path(base: &Path, c: f64) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("cstudy");
    base.with_file_name(format!("{stem}_c{c}.csv"))
}

fn finest_mesh(config: &RunConfig) -> Result<nls_dpg::mesh::TensorMesh> {
    Ok(config.meshes()?.pop().expect("at least one mesh"))
}

fn run(cli: Cli) -> Result<()> {
    let config = build_config(&cli.overrides)?;
    let out = config.output.as_deref();
    match cli.command {
        Command::Solve { matrix } => {
            let mesh = finest_mesh(&config)?;
            let case = config.case_data()?;
            let (sys, sol) = study::solve_case(&mesh, &case, config.spaces()?, config.solver)?;
            if let Some(path) = matrix {
                nls_dpg::solve::write_coordinate(&sys.schur, BufWriter::new(File::create(path)?))?;
            }
            let err = sys.errors(&sol, config.norm);
            let row = study::ConvergenceRow {
                sqrt_n: (mesh.num_elements() as f64).sqrt(),
                rel_l2_error: err.rel_l2,
                res: sol.total_residual,
                extslp: err.rel_l2,
            };
            if let Some(p) = out {
                study::write_rows(&[row], open_output(Some(p))?)?;
            }
            print_json(&json!({
                "num_elements": mesh.num_elements(),
                "dofs": sys.num_dofs(),
                "rel_L2_error": err.rel_l2,
                "per_field": err.per_field,
                "res": sol.total_residual,
                "refinement_steps": sol.info.refinement_steps,
                "fell_back": sol.info.fell_back,
            }))
        }
        Command::Convergence => {
            let st = study::run_convergence(&config)?;
            study::write_rows(&st.rows, open_output(out)?)?;
            if let Some(rate) = st.rate {
                eprintln!("observed rate {rate:.4}");
            }
            match st.failure {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Cstudy => {
            let runs = study::run_cstudy(&config)?;
            let mut summary = Vec::new();
            let mut failure = None;
            for r in runs {
                if let Some(base) = out {
                    study::write_rows(&r.study.rows, open_output(Some(&c_path(base, r.c)))?)?;
                }
                summary.push(json!({
                    "c": r.c,
                    "final_rel_L2_error": r.final_error(),
                    "condition_estimate": r.condition.map(|c| c.ratio()),
                    "non_convergent": r.non_convergent,
                }));
                failure = failure.or(r.study.failure);
            }
            print_json(&Value::Array(summary))?;
            match failure {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Adapt => {
            let (history, failure) = study::run_adaptive(&config)?;
            let rows = study::adaptive_rows(&history, (config.p + 1) as f64);
            study::write_rows(&rows, open_output(out)?)?;
            match failure {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Dump { exact } => {
            let mesh = finest_mesh(&config)?;
            let case = config.case_data()?;
            if exact {
                study::dump_exact(&case, &mesh, config.resolution, open_output(out)?)
            } else {
                let (sys, sol) = study::solve_case(&mesh, &case, config.spaces()?, config.solver)?;
                study::dump_field(&sys, &sol, config.resolution, open_output(out)?)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
