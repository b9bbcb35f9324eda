//! Command-line front end: dataset generation, kernel solving, operator
//! training, closed-loop simulation, and stability verification.
//!
//! Exit codes: 0 success, 1 verification/training failure, 2 usage or I/O
//! error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use backstep::dataset::{
    chebyshev_beta, generate_feedback_dataset, generate_kernel1d_dataset,
    generate_kernel2d_dataset, load_dataset, save_dataset, ChebyshevSpec, Dataset, DatasetKind,
};
use backstep::grid::{GridFunction1D, TriangularGridFunction};
use backstep::kernel1d::{residual_1d, solve_kernel, KernelSolveConfig};
use backstep::kernel2d::{residual_2d, solve_kernel_2d};
use backstep::nn::deeponet::{
    evaluate_relative_l2, train_deeponet, triangle_coords, uniform_grid_coords, DeepOnet,
    TrainConfig,
};
use backstep::nn::feedback::{evaluate_feedback_relative_l2, train_feedback, FeedbackNet};
use backstep::nn::mlp::Activation;
use backstep::nn::serialize::{load_model, save_model, SavedModel};
use backstep::sim::{simulate_pide, simulate_transport, Controller, TrajectoryRecord};
use backstep::stability::{run_feedback_experiment, run_gain_experiment, run_pide_experiment};
use backstep::Error;

#[derive(Parser)]
#[command(name = "backstep", version, about = "backstepping boundary control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training corpus.
    GenData(GenDataArgs),
    /// Solve a gain kernel and write it with its residual.
    SolveKernel(SolveKernelArgs),
    /// Train an operator model on a stored corpus.
    Train(TrainArgs),
    /// Run the plant open- or closed-loop and write the trajectory.
    Simulate(SimulateArgs),
    /// Run a stability experiment and write its report.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Kernel1d,
    Feedback,
    Kernel2d,
}

impl From<KindArg> for DatasetKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Kernel1d => DatasetKind::Kernel1d,
            KindArg::Feedback => DatasetKind::Feedback,
            KindArg::Kernel2d => DatasetKind::Kernel2d,
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    kind: KindArg,
    /// Number of samples.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    gamma_min: f64,
    #[arg(long, default_value_t = 8.0)]
    gamma_max: f64,
    /// Grid cells (per axis for the 2D kind).
    #[arg(long, default_value_t = 100)]
    cells: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveKernelArgs {
    /// beta:GAMMA, file:PATH (one value per line), or pide:GAMMA.
    #[arg(long)]
    plant: String,
    #[arg(long, default_value_t = 200)]
    cells: usize,
    /// Output directory for kernel.csv and solve.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by gen-data.
    dataset: PathBuf,
    /// JSON config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output model directory (also gets history.csv).
    #[arg(long)]
    out: PathBuf,
    /// Continue training the model already stored at --out.
    #[arg(long, default_value_t = false)]
    resume: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// beta:GAMMA, file:PATH, or pide:GAMMA.
    #[arg(long)]
    plant: String,
    /// open, exact, or model:PATH.
    #[arg(long, default_value = "open")]
    controller: String,
    #[arg(long, default_value_t = 200)]
    cells: usize,
    #[arg(long, default_value_t = 2.0)]
    t_final: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// gain, feedback, or pide.
    #[arg(long)]
    experiment: String,
    #[arg(long)]
    plant: String,
    /// exact or model:PATH.
    #[arg(long, default_value = "exact")]
    controller: String,
    #[arg(long, default_value_t = 200)]
    cells: usize,
    #[arg(long, default_value_t = 2.0)]
    t_final: f64,
    /// Report path (JSON).
    #[arg(long)]
    out: PathBuf,
}

/// Training-file schema: optimizer settings plus architecture knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TrainFileConfig {
    train: TrainConfig,
    hidden: Vec<usize>,
    basis: usize,
    /// Rows held out from the end of the corpus for testing.
    n_test: usize,
}

impl Default for TrainFileConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden: vec![128, 128],
            basis: 128,
            n_test: 0,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::SolveKernel(args) => cmd_solve_kernel(args),
        Command::Train(args) => cmd_train(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Divergence { .. } => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn cmd_gen_data(args: GenDataArgs) -> backstep::Result<ExitCode> {
    let cfg = KernelSolveConfig::default();
    let range = (args.gamma_min, args.gamma_max);
    let ds = match DatasetKind::from(args.kind) {
        DatasetKind::Kernel1d => {
            generate_kernel1d_dataset(args.n, range, args.cells, args.seed, &cfg)?
        }
        DatasetKind::Feedback => {
            generate_feedback_dataset(args.n, range, args.cells, args.seed, &cfg)?
        }
        DatasetKind::Kernel2d => {
            generate_kernel2d_dataset(args.n, range, args.cells, args.seed, &cfg)?
        }
    };
    save_dataset(&args.out, &ds)?;
    println!(
        "wrote {} samples to {}",
        ds.manifest.n_samples,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Parse beta:G | file:PATH | pide:G into plant data on the given grid.
enum Plant {
    Transport(GridFunction1D),
    Pide {
        g: GridFunction1D,
        f: TriangularGridFunction,
    },
}

fn parse_plant(spec: &str, n_cells: usize) -> backstep::Result<Plant> {
    if let Some(gamma) = spec.strip_prefix("beta:") {
        let gamma: f64 = gamma
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad gamma in plant spec {spec:?}")))?;
        let spec = ChebyshevSpec::new(gamma);
        spec.validate()?;
        Ok(Plant::Transport(chebyshev_beta(&spec, n_cells)))
    } else if let Some(path) = spec.strip_prefix("file:") {
        let text = fs::read_to_string(path)?;
        let values: Vec<f64> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad value in {path}: {l:?}")))
            })
            .collect::<backstep::Result<_>>()?;
        if values.len() < 2 {
            return Err(Error::Format(format!("{path}: need at least 2 values")));
        }
        Ok(Plant::Transport(GridFunction1D::new(
            values.len() - 1,
            values,
        )?))
    } else if let Some(gamma) = spec.strip_prefix("pide:") {
        let gamma: f64 = gamma
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad gamma in plant spec {spec:?}")))?;
        let cheb = ChebyshevSpec::new(gamma);
        cheb.validate()?;
        let beta = chebyshev_beta(&cheb, n_cells);
        let f = TriangularGridFunction::from_fn(n_cells, |x, y| {
            let b = |v: f64| beta.get((v * n_cells as f64).round() as usize);
            b(x) * b(y)
        });
        Ok(Plant::Pide {
            g: GridFunction1D::zeros(n_cells),
            f,
        })
    } else {
        Err(Error::InvalidConfig(format!(
            "plant spec {spec:?} must be beta:G, file:PATH, or pide:G"
        )))
    }
}

fn cmd_solve_kernel(args: SolveKernelArgs) -> backstep::Result<ExitCode> {
    fs::create_dir_all(&args.out)?;
    let cfg = KernelSolveConfig::default();
    match parse_plant(&args.plant, args.cells)? {
        Plant::Transport(beta) => {
            let k = solve_kernel(&beta, &cfg)?;
            let residual = residual_1d(&beta, &k)?;
            let mut csv = String::from("x,k\n");
            for i in 0..=k.n_cells() {
                csv.push_str(&format!("{},{}\n", k.x(i), k.get(i)));
            }
            fs::write(args.out.join("kernel.csv"), csv)?;
            let summary = serde_json::json!({
                "plant": args.plant,
                "cells": beta.n_cells(),
                "residual": residual,
                "kernel_sup": k.sup_norm(),
            });
            fs::write(
                args.out.join("solve.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            println!("residual {residual:.3e}");
        }
        Plant::Pide { g, f, .. } => {
            let k = solve_kernel_2d(&g, &f, &cfg)?;
            let residual = residual_2d(&g, &f, &k)?;
            let n = k.n_cells();
            let mut csv = String::from("x,y,k\n");
            for i in 0..=n {
                for j in 0..=i {
                    csv.push_str(&format!(
                        "{},{},{}\n",
                        i as f64 / n as f64,
                        j as f64 / n as f64,
                        k.get(i, j)
                    ));
                }
            }
            fs::write(args.out.join("kernel.csv"), csv)?;
            let summary = serde_json::json!({
                "plant": args.plant,
                "cells": n,
                "residual": residual,
                "kernel_sup": k.sup_norm(),
            });
            fs::write(
                args.out.join("solve.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            println!("residual {residual:.3e}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: TrainArgs) -> backstep::Result<ExitCode> {
    let file_cfg: TrainFileConfig = match &args.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => TrainFileConfig::default(),
    };
    let ds = load_dataset(&args.dataset)?;
    let (train_ds, test_ds): (Dataset, Option<Dataset>) = if file_cfg.n_test > 0 {
        let n_train = ds
            .len()
            .checked_sub(file_cfg.n_test)
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidConfig("n_test leaves no training rows".into()))?;
        let (head, tail) = ds.split_rows(n_train)?;
        (head, Some(tail))
    } else {
        (ds, None)
    };

    let n_cells = train_ds.manifest.n_cells;
    let history;
    let model;
    let test_rel_l2;
    match train_ds.manifest.kind {
        DatasetKind::Kernel1d | DatasetKind::Kernel2d => {
            let corpus = train_ds.to_operator_dataset()?;
            let test_corpus = test_ds
                .as_ref()
                .map(|d| d.to_operator_dataset())
                .transpose()?;
            let mut net = if args.resume {
                match load_model(&args.out)? {
                    SavedModel::Kernel1d(m) | SavedModel::Kernel2d(m) => m,
                    SavedModel::Feedback(_) => {
                        return Err(Error::Format(
                            "stored model kind does not match the dataset".into(),
                        ))
                    }
                }
            } else {
                let m = corpus.inputs.ncols();
                let (sensors, trunk_in) = match train_ds.manifest.kind {
                    DatasetKind::Kernel1d => (uniform_grid_coords(n_cells), 1),
                    _ => (triangle_coords(n_cells), 2),
                };
                let mut branch_sizes = vec![m];
                branch_sizes.extend(&file_cfg.hidden);
                branch_sizes.push(file_cfg.basis);
                let mut trunk_sizes = vec![trunk_in];
                trunk_sizes.extend(&file_cfg.hidden);
                trunk_sizes.push(file_cfg.basis);
                DeepOnet::new_seeded(
                    &branch_sizes,
                    &trunk_sizes,
                    sensors,
                    Activation::Tanh,
                    file_cfg.train.seed,
                )?
            };
            history = train_deeponet(&mut net, &corpus, test_corpus.as_ref(), &file_cfg.train)?;
            test_rel_l2 = match &test_corpus {
                Some(t) => Some(evaluate_relative_l2(&net, t)?),
                None => None,
            };
            model = match train_ds.manifest.kind {
                DatasetKind::Kernel1d => SavedModel::Kernel1d(net),
                _ => SavedModel::Kernel2d(net),
            };
        }
        DatasetKind::Feedback => {
            let corpus = train_ds.to_feedback_dataset()?;
            let test_corpus = test_ds
                .as_ref()
                .map(|d| d.to_feedback_dataset())
                .transpose()?;
            let mut net = if args.resume {
                match load_model(&args.out)? {
                    SavedModel::Feedback(m) => m,
                    _ => {
                        return Err(Error::Format(
                            "stored model kind does not match the dataset".into(),
                        ))
                    }
                }
            } else {
                FeedbackNet::new_seeded(
                    n_cells + 1,
                    n_cells,
                    &file_cfg.hidden,
                    file_cfg.basis,
                    file_cfg.train.seed,
                )?
            };
            history = train_feedback(&mut net, &corpus, test_corpus.as_ref(), &file_cfg.train)?;
            test_rel_l2 = match &test_corpus {
                Some(t) => Some(evaluate_feedback_relative_l2(&net, t)?),
                None => None,
            };
            model = SavedModel::Feedback(net);
        }
    }

    save_model(&args.out, &model)?;
    let mut csv = String::from("epoch,train_rel_l2,validation_rel_l2\n");
    for (i, loss) in history.train.iter().enumerate() {
        let val = history
            .validation
            .get(i)
            .map(|v| v.to_string())
            .unwrap_or_default();
        csv.push_str(&format!("{i},{loss},{val}\n"));
    }
    fs::write(args.out.join("history.csv"), csv)?;
    match test_rel_l2 {
        Some(v) => println!("final test relative L2: {v:.4e}"),
        None => println!(
            "final train relative L2: {:.4e}",
            history.train.last().unwrap()
        ),
    }
    Ok(ExitCode::SUCCESS)
}

fn default_initial_state(n_cells: usize) -> GridFunction1D {
    GridFunction1D::from_fn(n_cells, |x| (std::f64::consts::PI * x).sin() + 1.0)
}

/// Linear interpolation of a grid function at arbitrary coordinates in [0,1].
fn sample_at(f: &GridFunction1D, x: f64) -> f64 {
    let n = f.n_cells() as f64;
    let pos = (x.clamp(0.0, 1.0) * n).min(n);
    let i = pos.floor() as usize;
    if i >= f.n_cells() {
        return f.get(f.n_cells());
    }
    let frac = pos - i as f64;
    f.get(i) * (1.0 - frac) + f.get(i + 1) * frac
}

/// Evaluate a stored kernel model on a transport plant's grid.
fn kernel_from_model(model: &DeepOnet, beta: &GridFunction1D) -> backstep::Result<GridFunction1D> {
    let sensor_values: Vec<f64> = model
        .sensors
        .rows()
        .into_iter()
        .map(|row| sample_at(beta, row[0]))
        .collect();
    let queries = uniform_grid_coords(beta.n_cells());
    let values = model.forward(&sensor_values, &queries)?;
    GridFunction1D::new(beta.n_cells(), values)
}

fn kernel2d_from_model(
    model: &DeepOnet,
    f: &TriangularGridFunction,
) -> backstep::Result<TriangularGridFunction> {
    let expected = f.values().len();
    if model.sensor_count() != expected {
        return Err(Error::ShapeMismatch(format!(
            "2d model expects {} sensors, plant grid provides {expected}",
            model.sensor_count()
        )));
    }
    let queries = triangle_coords(f.n_cells());
    let values = model.forward(f.values(), &queries)?;
    TriangularGridFunction::new(f.n_cells(), values)
}

fn write_trajectory(dir: &Path, traj: &TrajectoryRecord, flags: serde_json::Value) -> backstep::Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = String::from("time,x,u\n");
    for step in 0..=traj.n_steps() {
        let t = traj.time(step);
        let state = traj.state(step);
        for i in 0..=traj.n_cells() {
            csv.push_str(&format!("{},{},{}\n", t, state.x(i), state.get(i)));
        }
    }
    fs::write(dir.join("trajectory.csv"), csv)?;
    let mut controls = String::from("time,control,l2_norm\n");
    let norms = traj.l2_norms();
    for step in 0..=traj.n_steps() {
        controls.push_str(&format!(
            "{},{},{}\n",
            traj.time(step),
            traj.controls()[step],
            norms[step]
        ));
    }
    fs::write(dir.join("controls.csv"), controls)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&flags)?)?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> backstep::Result<ExitCode> {
    let cfg = KernelSolveConfig::default();
    let flags = serde_json::json!({
        "plant": args.plant,
        "controller": args.controller,
        "cells": args.cells,
        "t_final": args.t_final,
        "initial_state": "sin(pi x) + 1",
    });
    match parse_plant(&args.plant, args.cells)? {
        Plant::Transport(beta) => {
            let u0 = default_initial_state(beta.n_cells());
            let traj = match args.controller.as_str() {
                "open" => {
                    simulate_transport(&beta, &u0, &Controller::OpenLoopZero, args.t_final)?
                }
                "exact" => {
                    let k = solve_kernel(&beta, &cfg)?;
                    simulate_transport(&beta, &u0, &Controller::GainKernel(&k), args.t_final)?
                }
                other => match other.strip_prefix("model:") {
                    Some(path) => match load_model(Path::new(path))? {
                        SavedModel::Kernel1d(net) => {
                            let k_hat = kernel_from_model(&net, &beta)?;
                            simulate_transport(
                                &beta,
                                &u0,
                                &Controller::GainKernel(&k_hat),
                                args.t_final,
                            )?
                        }
                        SavedModel::Feedback(net) => {
                            let sensor_values: Vec<f64> = net
                                .kernel_stage
                                .sensors
                                .rows()
                                .into_iter()
                                .map(|row| sample_at(&beta, row[0]))
                                .collect();
                            if net.n_cells() != beta.n_cells() {
                                return Err(Error::GridMismatch(
                                    net.n_cells(),
                                    beta.n_cells(),
                                ));
                            }
                            let law = |u: &GridFunction1D| {
                                net.forward(&sensor_values, u.values()).unwrap_or(f64::NAN)
                            };
                            simulate_transport(
                                &beta,
                                &u0,
                                &Controller::NeuralFeedback(&law),
                                args.t_final,
                            )?
                        }
                        SavedModel::Kernel2d(_) => {
                            return Err(Error::InvalidConfig(
                                "2d kernel model cannot drive a transport plant".into(),
                            ))
                        }
                    },
                    None => {
                        return Err(Error::InvalidConfig(format!(
                            "controller {other:?} must be open, exact, or model:PATH"
                        )))
                    }
                },
            };
            write_trajectory(&args.out, &traj, flags)?;
            println!(
                "final l2 norm {:.4e}",
                traj.l2_norms().last().unwrap()
            );
        }
        Plant::Pide { g, f, .. } => {
            let u0 = default_initial_state(g.n_cells());
            let traj = match args.controller.as_str() {
                "open" => simulate_pide(&g, &f, &u0, &Controller::OpenLoopZero, args.t_final)?,
                "exact" => {
                    let k = solve_kernel_2d(&g, &f, &cfg)?;
                    simulate_pide(&g, &f, &u0, &Controller::GainKernel2d(&k), args.t_final)?
                }
                other => match other.strip_prefix("model:") {
                    Some(path) => match load_model(Path::new(path))? {
                        SavedModel::Kernel2d(net) => {
                            let k_hat = kernel2d_from_model(&net, &f)?;
                            simulate_pide(
                                &g,
                                &f,
                                &u0,
                                &Controller::GainKernel2d(&k_hat),
                                args.t_final,
                            )?
                        }
                        _ => {
                            return Err(Error::InvalidConfig(
                                "the PIDE plant takes a 2d kernel model".into(),
                            ))
                        }
                    },
                    None => {
                        return Err(Error::InvalidConfig(format!(
                            "controller {other:?} must be open, exact, or model:PATH"
                        )))
                    }
                },
            };
            write_trajectory(&args.out, &traj, flags)?;
            println!(
                "final l2 norm {:.4e}",
                traj.l2_norms().last().unwrap()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> backstep::Result<ExitCode> {
    let cfg = KernelSolveConfig::default();
    let report = match args.experiment.as_str() {
        "gain" => {
            let beta = match parse_plant(&args.plant, args.cells)? {
                Plant::Transport(beta) => beta,
                Plant::Pide { .. } => {
                    return Err(Error::InvalidConfig(
                        "gain experiment runs on the transport plant".into(),
                    ))
                }
            };
            let u0 = default_initial_state(beta.n_cells());
            let k_hat = match args.controller.as_str() {
                "exact" => solve_kernel(&beta, &cfg)?,
                other => match other.strip_prefix("model:") {
                    Some(path) => match load_model(Path::new(path))? {
                        SavedModel::Kernel1d(net) => kernel_from_model(&net, &beta)?,
                        _ => {
                            return Err(Error::InvalidConfig(
                                "gain experiment takes a 1d kernel model".into(),
                            ))
                        }
                    },
                    None => {
                        return Err(Error::InvalidConfig(format!(
                            "controller {other:?} must be exact or model:PATH"
                        )))
                    }
                },
            };
            run_gain_experiment(&beta, &k_hat, &u0, args.t_final, 2.0)?
        }
        "feedback" => {
            let beta = match parse_plant(&args.plant, args.cells)? {
                Plant::Transport(beta) => beta,
                Plant::Pide { .. } => {
                    return Err(Error::InvalidConfig(
                        "feedback experiment runs on the transport plant".into(),
                    ))
                }
            };
            // keep the initial state inside the admissible ball
            let u0 = default_initial_state(beta.n_cells()).scale(1e-3);
            match args.controller.as_str() {
                "exact" => {
                    let k = solve_kernel(&beta, &cfg)?;
                    let law =
                        |u: &GridFunction1D| backstep::control_1d(&k, u).unwrap_or(f64::NAN);
                    run_feedback_experiment(&beta, &law, &u0, args.t_final, 2.0)?
                }
                other => match other.strip_prefix("model:") {
                    Some(path) => match load_model(Path::new(path))? {
                        SavedModel::Feedback(net) => {
                            if net.n_cells() != beta.n_cells() {
                                return Err(Error::GridMismatch(
                                    net.n_cells(),
                                    beta.n_cells(),
                                ));
                            }
                            let sensor_values: Vec<f64> = net
                                .kernel_stage
                                .sensors
                                .rows()
                                .into_iter()
                                .map(|row| sample_at(&beta, row[0]))
                                .collect();
                            let law = |u: &GridFunction1D| {
                                net.forward(&sensor_values, u.values()).unwrap_or(f64::NAN)
                            };
                            run_feedback_experiment(&beta, &law, &u0, args.t_final, 2.0)?
                        }
                        _ => {
                            return Err(Error::InvalidConfig(
                                "feedback experiment takes a feedback model".into(),
                            ))
                        }
                    },
                    None => {
                        return Err(Error::InvalidConfig(format!(
                            "controller {other:?} must be exact or model:PATH"
                        )))
                    }
                },
            }
        }
        "pide" => {
            let (g, f) = match parse_plant(&args.plant, args.cells)? {
                Plant::Pide { g, f, .. } => (g, f),
                Plant::Transport(_) => {
                    return Err(Error::InvalidConfig(
                        "pide experiment needs a pide:G plant".into(),
                    ))
                }
            };
            let u0 = default_initial_state(g.n_cells());
            let k_hat = match args.controller.as_str() {
                "exact" => solve_kernel_2d(&g, &f, &cfg)?,
                other => match other.strip_prefix("model:") {
                    Some(path) => match load_model(Path::new(path))? {
                        SavedModel::Kernel2d(net) => kernel2d_from_model(&net, &f)?,
                        _ => {
                            return Err(Error::InvalidConfig(
                                "pide experiment takes a 2d kernel model".into(),
                            ))
                        }
                    },
                    None => {
                        return Err(Error::InvalidConfig(format!(
                            "controller {other:?} must be exact or model:PATH"
                        )))
                    }
                },
            };
            run_pide_experiment(&g, &f, &k_hat, &u0, args.t_final, 0.1)?
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "experiment {other:?} must be gain, feedback, or pide"
            )))
        }
    };

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    for v in &report.verdicts {
        println!(
            "{}: {} ({})",
            v.name,
            if v.pass { "pass" } else { "FAIL" },
            v.detail
        );
    }
    if report.pass() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}
