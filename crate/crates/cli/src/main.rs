//! `fucik`: assemble the discrete forms, solve the spectrum, trace the
//! Fucik curves, classify points, test the gap condition, verify candidate
//! solutions, and compute general-p quantities.
//!
//! Config is a JSON document (see README). Forms and eigendecompositions are
//! cached on disk keyed by the config hash; `FUCIK_CACHE_DIR` overrides the
//! cache location. Exit codes: 0 success, 2 usage/config, 3 solver failure.

use clap::{Parser, Subcommand};
use fucik_core::curves::{gap_condition, residual_check, FucikProblem};
use fucik_core::eigen::EigenDecomposition;
use fucik_core::fucik::SolverParams;
use fucik_core::plap::PlapProblem;
use fucik_core::{build_mesh, matrix_from_csv, matrix_to_csv, Error, GalerkinForms, Mesh, ProblemConfig};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "fucik", version, about = "Dancer-Fucik spectrum of the 1-D fractional (p-)Laplacian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble and cache the stiffness and mass forms
    Assemble {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Solve the generalized eigenproblem; emit lambdas, multiplicities,
    /// cumulative dimensions and residuals as JSON
    Eigs {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Trace the lower and upper curves around (lambda_k, lambda_k); writes
    /// the curve CSV, a classification JSON and the run manifest
    Curve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 9)]
        grid: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Classify a point (a, b) relative to the curves in square k
    Classify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Eigenspace asymmetry (gap condition) at level k
    Gap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Check a candidate solution file against the weak formulation at (a, b)
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// First eigenvalue for general p by constrained minimization
    PlapLambda1 {
        #[arg(long)]
        config: PathBuf,
        /// overrides the exponent from the config
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// First nontrivial curve points (c(t), c(t) t) by mountain pass
    PlapCurve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        p: Option<f64>,
        /// comma-separated slopes t
        #[arg(long, default_value = "0.6,0.8,1.0,1.25,1.67")]
        tgrid: String,
        #[arg(long, default_value_t = 49)]
        path_nodes: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

/// 2 for config/usage problems, 3 for solver failures.
fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::NonConvergence { .. }
            | Error::PathCollapse
            | Error::OutOfSquare { .. }
            | Error::SignChangingMinimizer
            | Error::MassNotPositiveDefinite
            | Error::NotOrthogonal(_),
        ) => 3,
        Some(_) => 2,
        None => 2,
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    config_hash: String,
    artifact_version: String,
    seed: u64,
    outputs: Vec<String>,
    timings_ms: BTreeMap<String, u128>,
    forms_cache_hit: bool,
    eigs_cache_hit: bool,
}

struct Timed {
    timings: BTreeMap<String, u128>,
}

impl Timed {
    fn new() -> Self {
        Self {
            timings: BTreeMap::new(),
        }
    }

    fn run<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.timings.insert(name.to_string(), t0.elapsed().as_millis());
        out
    }
}

fn cache_dir(out_dir: &Path) -> PathBuf {
    std::env::var_os("FUCIK_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| out_dir.join("cache"))
}

struct Stage {
    config: ProblemConfig,
    mesh: Mesh,
    forms: GalerkinForms,
    forms_cache_hit: bool,
}

fn load_config(path: &Path) -> anyhow::Result<ProblemConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    Ok(ProblemConfig::from_json(&text)?)
}

fn load_or_assemble(config_path: &Path, out_dir: &Path) -> anyhow::Result<Stage> {
    let config = load_config(config_path)?;
    let mesh = build_mesh(&config)?;
    let cache = cache_dir(out_dir);
    std::fs::create_dir_all(&cache)?;
    let hash = config.hash_hex();
    let paths = [
        cache.join(format!("{hash}.stiffness.csv")),
        cache.join(format!("{hash}.mass.csv")),
        cache.join(format!("{hash}.lumped.csv")),
    ];
    if paths.iter().all(|p| p.exists()) {
        let stiffness = matrix_from_csv(&std::fs::read_to_string(&paths[0])?)?;
        let mass = matrix_from_csv(&std::fs::read_to_string(&paths[1])?)?;
        let lumped = matrix_from_csv(&std::fs::read_to_string(&paths[2])?)?;
        if stiffness.nrows() == mesh.n_dofs() {
            return Ok(Stage {
                config,
                mesh,
                forms: GalerkinForms {
                    stiffness,
                    mass,
                    m_lumped: lumped.column(0).into_owned(),
                },
                forms_cache_hit: true,
            });
        }
    }
    let forms = GalerkinForms::assemble(&mesh, &config)?;
    std::fs::write(&paths[0], matrix_to_csv(&forms.stiffness))?;
    std::fs::write(&paths[1], matrix_to_csv(&forms.mass))?;
    let lumped_mat = DMatrix::from_column_slice(forms.m_lumped.len(), 1, forms.m_lumped.as_slice());
    std::fs::write(&paths[2], matrix_to_csv(&lumped_mat))?;
    Ok(Stage {
        config,
        mesh,
        forms,
        forms_cache_hit: false,
    })
}

#[derive(Serialize, serde::Deserialize)]
struct SpectrumCache {
    lambdas: Vec<f64>,
    mults: Vec<usize>,
    d: Vec<usize>,
    all_eigenvalues: Vec<f64>,
    residuals: Vec<f64>,
}

fn load_or_solve_eigs(
    stage: &Stage,
    out_dir: &Path,
) -> anyhow::Result<(EigenDecomposition, bool)> {
    let cache = cache_dir(out_dir);
    let hash = stage.config.hash_hex();
    let basis_path = cache.join(format!("{hash}.basis.csv"));
    let spec_path = cache.join(format!("{hash}.spectrum.json"));
    if basis_path.exists() && spec_path.exists() {
        let basis = matrix_from_csv(&std::fs::read_to_string(&basis_path)?)?;
        let sc: SpectrumCache = serde_json::from_str(&std::fs::read_to_string(&spec_path)?)?;
        if basis.nrows() == stage.mesh.n_dofs() {
            return Ok((
                EigenDecomposition {
                    lambdas: sc.lambdas,
                    mults: sc.mults,
                    d: sc.d,
                    basis,
                    all_eigenvalues: sc.all_eigenvalues,
                    residuals: sc.residuals,
                },
                true,
            ));
        }
    }
    let decomp = stage
        .forms
        .solve_spectrum(stage.config.tolerances.cluster_tol)?;
    std::fs::write(&basis_path, matrix_to_csv(&decomp.basis))?;
    let sc = SpectrumCache {
        lambdas: decomp.lambdas.clone(),
        mults: decomp.mults.clone(),
        d: decomp.d.clone(),
        all_eigenvalues: decomp.all_eigenvalues.clone(),
        residuals: decomp.residuals.clone(),
    };
    std::fs::write(&spec_path, serde_json::to_string_pretty(&sc)?)?;
    Ok((decomp, false))
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    stage: &Stage,
    outputs: &[PathBuf],
    timings: BTreeMap<String, u128>,
    forms_hit: bool,
    eigs_hit: bool,
) -> anyhow::Result<PathBuf> {
    let manifest = Manifest {
        command: command.to_string(),
        config_hash: stage.config.hash_hex(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: stage.config.seed,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        timings_ms: timings,
        forms_cache_hit: forms_hit,
        eigs_cache_hit: eigs_hit,
    };
    let path = out_dir.join(format!("{command}_manifest.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

fn solver_params(config: &ProblemConfig) -> SolverParams {
    SolverParams::from_config(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Assemble { config, out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            let mut timed = Timed::new();
            let stage = timed.run("assemble", || load_or_assemble(&config, &out_dir))?;
            if stage.forms_cache_hit {
                eprintln!("cache hit: assembly skipped");
            }
            let hash = stage.config.hash_hex();
            let cache = cache_dir(&out_dir);
            let outputs = vec![
                cache.join(format!("{hash}.stiffness.csv")),
                cache.join(format!("{hash}.mass.csv")),
                cache.join(format!("{hash}.lumped.csv")),
            ];
            let m = write_manifest(
                &out_dir,
                "assemble",
                &stage,
                &outputs,
                timed.timings,
                stage.forms_cache_hit,
                false,
            )?;
            println!("{}", serde_json::json!({"config_hash": hash, "dofs": stage.mesh.n_dofs(), "manifest": m.display().to_string()}));
            Ok(())
        }
        Command::Eigs { config, out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            let mut timed = Timed::new();
            let stage = timed.run("assemble", || load_or_assemble(&config, &out_dir))?;
            let (decomp, eigs_hit) = timed.run("eigensolve", || load_or_solve_eigs(&stage, &out_dir))?;
            let doc = serde_json::json!({
                "lambdas": decomp.lambdas,
                "mults": decomp.mults,
                "d": decomp.d,
                "residuals": decomp.residuals,
            });
            let text = serde_json::to_string_pretty(&doc)?;
            let path = out_dir.join("eigs.json");
            std::fs::write(&path, &text)?;
            write_manifest(
                &out_dir,
                "eigs",
                &stage,
                &[path],
                timed.timings,
                stage.forms_cache_hit,
                eigs_hit,
            )?;
            println!("{text}");
            Ok(())
        }
        Command::Curve {
            config,
            k,
            grid,
            threads,
            out_dir,
        } => {
            if k < 2 {
                return Err(Error::Config(format!(
                    "k must be >= 2 (the square needs lambda_(k-1)); got {k}"
                ))
                .into());
            }
            std::fs::create_dir_all(&out_dir)?;
            let mut timed = Timed::new();
            let stage = timed.run("assemble", || load_or_assemble(&config, &out_dir))?;
            let (decomp, eigs_hit) = timed.run("eigensolve", || load_or_solve_eigs(&stage, &out_dir))?;
            let problem = FucikProblem::new(
                &stage.forms.stiffness,
                &stage.forms.m_lumped,
                &decomp,
                solver_params(&stage.config),
            );
            let sample = timed.run("trace", || problem.trace_curves(k, grid, threads))?;
            let csv_path = out_dir.join(format!("curve_k{k}.csv"));
            std::fs::write(&csv_path, sample.to_csv())?;

            // classification probes: the diagonal point offset up and down,
            // and the antidiagonal at one percent of the square width
            let lk = decomp.lambdas[k - 1];
            let width = decomp.lambdas[k] - decomp.lambdas[k - 2];
            let probes = [
                (lk, lk - 0.05 * width),
                (lk, lk + 0.05 * width),
                (lk - 0.01 * width, lk + 0.01 * width),
            ];
            let mut rows = Vec::new();
            timed.run("classify", || -> anyhow::Result<()> {
                for (a, b) in probes {
                    let c = problem.classify_point(k, a, b)?;
                    rows.push(serde_json::json!({
                        "a": a,
                        "b": b,
                        "label": c.label.as_str(),
                        "n": c.n_value,
                        "m": c.m_value,
                        "itilde_signs": c.itilde,
                    }));
                }
                Ok(())
            })?;
            let cls_path = out_dir.join(format!("classify_k{k}.json"));
            std::fs::write(&cls_path, serde_json::to_string_pretty(&rows)?)?;

            let m = write_manifest(
                &out_dir,
                "curve",
                &stage,
                &[csv_path.clone(), cls_path.clone()],
                timed.timings,
                stage.forms_cache_hit,
                eigs_hit,
            )?;
            println!(
                "{}",
                serde_json::json!({
                    "curve_csv": csv_path.display().to_string(),
                    "classification": cls_path.display().to_string(),
                    "manifest": m.display().to_string(),
                })
            );
            Ok(())
        }
        Command::Classify {
            config,
            k,
            a,
            b,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let stage = load_or_assemble(&config, &out_dir)?;
            let (decomp, _) = load_or_solve_eigs(&stage, &out_dir)?;
            let problem = FucikProblem::new(
                &stage.forms.stiffness,
                &stage.forms.m_lumped,
                &decomp,
                solver_params(&stage.config),
            );
            let c = problem.classify_point(k, a, b)?;
            let doc = serde_json::json!({
                "label": c.label.as_str(),
                "n": c.n_value,
                "m": c.m_value,
                "itilde_signs": c.itilde,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
        Command::Gap { config, k, out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            let stage = load_or_assemble(&config, &out_dir)?;
            let (decomp, _) = load_or_solve_eigs(&stage, &out_dir)?;
            let rep = gap_condition(&decomp, &stage.forms.m_lumped, k)?;
            let doc = serde_json::json!({
                "nonempty": rep.nonempty,
                "asymmetry": rep.asymmetry,
                "witness_norms": [rep.part_norms.0, rep.part_norms.1],
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
        Command::Verify {
            config,
            u,
            a,
            b,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let stage = load_or_assemble(&config, &out_dir)?;
            let text = std::fs::read_to_string(&u)
                .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", u.display()))?;
            let vals: Vec<f64> = text
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| Error::Config(e.to_string())))
                .collect::<Result<_, _>>()?;
            if vals.len() != stage.mesh.n_dofs() {
                return Err(Error::DimensionMismatch {
                    expected: stage.mesh.n_dofs(),
                    got: vals.len(),
                }
                .into());
            }
            let uvec = DVector::from_vec(vals);
            let r = residual_check(&stage.forms.stiffness, &stage.forms.m_lumped, &uvec, a, b)?;
            let accept = r <= fucik_core::curves::WITNESS_TOL;
            let doc = serde_json::json!({"residual": r, "accept": accept});
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
        Command::PlapLambda1 { config, p, out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            let mut cfg = load_config(&config)?;
            if let Some(p) = p {
                cfg.p = p;
                cfg.validate()?;
            }
            let mesh = build_mesh(&cfg)?;
            let prob = PlapProblem::new(
                &mesh,
                cfg.s,
                cfg.p,
                cfg.quad_order,
                cfg.effective_truncation_radius(),
                cfg.seed,
            )?;
            let res = prob.minimize_lambda1(None, 4000)?;
            let doc = serde_json::json!({
                "lambda1": res.lambda1,
                "iterations": res.iterations,
                "residual": res.residual,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
        Command::PlapCurve {
            config,
            p,
            tgrid,
            path_nodes,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let mut cfg = load_config(&config)?;
            if let Some(p) = p {
                cfg.p = p;
                cfg.validate()?;
            }
            let ts: Vec<f64> = tgrid
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad tgrid entry {t:?}: {e}")))
                })
                .collect::<Result<_, _>>()?;
            let mesh = build_mesh(&cfg)?;
            // the p = 2 matrix fast path needs the stiffness to outlive the
            // problem handle, so assemble it up front either way
            let forms = GalerkinForms::assemble(&mesh, &cfg)?;
            let mut prob = PlapProblem::new(
                &mesh,
                cfg.s,
                cfg.p,
                cfg.quad_order,
                cfg.effective_truncation_radius(),
                cfg.seed,
            )?;
            if cfg.p == 2.0 {
                prob = prob.with_stiffness(&forms.stiffness);
            }
            let lam1 = prob.minimize_lambda1(None, 4000)?;
            // admissible slope range from the discrete surrogate for
            // lambda_2: the eigensolve at p = 2, the t = 1 mountain-pass
            // value otherwise
            let lambda2s = if cfg.p == 2.0 {
                forms
                    .solve_spectrum(cfg.tolerances.cluster_tol)?
                    .lambdas[1]
            } else {
                prob.mountain_pass(1.0, path_nodes, &lam1.minimizer, 1500)?.c
            };
            let (t_lo, t_hi) = (lam1.lambda1 / lambda2s, lambda2s / lam1.lambda1);
            let mut csv = String::from("t,c,a,b,residual\n");
            for &t in &ts {
                if !(t > t_lo && t < t_hi) {
                    eprintln!("skipping t = {t}: outside the admissible range ({t_lo:.4}, {t_hi:.4})");
                    continue;
                }
                let pt = prob.mountain_pass(t, path_nodes, &lam1.minimizer, 1500)?;
                csv.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    pt.t,
                    pt.c,
                    pt.c,
                    pt.c * pt.t,
                    pt.residual
                ));
            }
            let path = out_dir.join("plap_curve.csv");
            std::fs::write(&path, &csv)?;
            print!("{csv}");
            Ok(())
        }
    }
}
