use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use smartpg::case::{import_matpower_m, parse_case_json, to_case_json, GridCase};
use smartpg::experiment::{
    ablation_run, bench, generate_dataset, quality_prior_morphism, read_jsonl, results_csv, sample_loads, split,
    validate_samples, write_jsonl, MorphConfig, Sample,
};
use smartpg::ipm::{solve, solve_with_fallback, OpfPoint, SolveReport, WarmStart};
use smartpg::mtl::{build_separate_topology, build_topology, train, LossWeights, MtlModel, TrainConfig};
use smartpg::pf::Network;
use smartpg::strategy::{StrategyContext, StrategyRegistry};

use crate::args::{CaseCommand, Cli, Command, DatasetCommand};
use crate::config::RunConfig;
use crate::Failure;

pub fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<(), Failure> {
    match &cli.command {
        Command::Case(CaseCommand::Validate { file }) => case_validate(file),
        Command::Case(CaseCommand::Import { file, output }) => {
            let case = load_case(file)?;
            write_text(output, &to_case_json(&case))
        }
        Command::Solve(a) => cmd_solve(cli, cfg, a),
        Command::Dataset(DatasetCommand::Gen(a)) => cmd_dataset(cli, cfg, a),
        Command::Train(a) => cmd_train(cli, cfg, a),
        Command::Predict(a) => cmd_predict(a),
        Command::Ablate(a) => cmd_ablate(cli, cfg, a),
        Command::Morph(a) => cmd_morph(cli, cfg, a),
        Command::Bench(a) => cmd_bench(cli, cfg, a),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::invalid(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

/// Reads a case in native JSON or, for `.m` files, MATPOWER format.
fn load_case(path: &Path) -> Result<GridCase, Failure> {
    let text = read_text(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "m") {
        import_matpower_m(&text)
    } else {
        parse_case_json(&text)
    };
    parsed.map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn load_network(path: &Path) -> Result<Network, Failure> {
    Ok(Network::new(&load_case(path)?)?)
}

fn load_samples(path: &Path, net: &Network) -> Result<Vec<Sample>, Failure> {
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    let samples = read_jsonl(BufReader::new(file)).map_err(|e| match e {
        smartpg::Error::Io(e) => Failure::io(path, e),
        e => Failure::invalid(format!("{}: {e}", path.display())),
    })?;
    validate_samples(net, &samples)?;
    if samples.is_empty() {
        return Err(Failure::invalid(format!("{}: no samples", path.display())));
    }
    Ok(samples)
}

fn load_model(path: &Path, net: &Network) -> Result<MtlModel, Failure> {
    MtlModel::from_json(&read_text(path)?, Some(&net.dims))
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn case_validate(file: &Path) -> Result<(), Failure> {
    let case = match load_case(file) {
        Ok(c) => c,
        Err(f) if f.code == Failure::INVALID => {
            println!("invalid: {}", f.message);
            return Err(Failure { code: Failure::USAGE, message: "validation failed".into() });
        }
        Err(f) => return Err(f),
    };
    let d = case.dimensions();
    println!(
        "valid: {} buses, {} generators, {} branches; n_x {}, n_eq {}, n_ineq {}",
        d.n_bus, d.n_gen, d.n_branch, d.n_x, d.n_eq, d.n_ineq
    );
    Ok(())
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    point: &'a OpfPoint,
    report: &'a SolveReport,
}

fn cmd_solve(cli: &Cli, cfg: &RunConfig, a: &crate::args::SolveArgs) -> Result<(), Failure> {
    let net = load_network(&a.case)?;
    let ws: Option<WarmStart> = a.warm_start.as_deref().map(read_json).transpose()?;
    let (point, mut report) = if a.no_fallback {
        solve(&net, ws.as_ref(), &cfg.ipm)?
    } else {
        solve_with_fallback(&net, ws.as_ref(), &cfg.ipm)?
    };
    if cli.deterministic {
        report.wall_time = 0.0;
        report.attempts.iter_mut().for_each(|a| a.wall_time = 0.0);
    }
    let out = SolveOutput { point: &point, report: &report };
    match &a.output {
        Some(p) => write_json(p, &out)?,
        None => println!("{}", serde_json::to_string_pretty(&out).map_err(|e| Failure::invalid(e.to_string()))?),
    }
    if let Some(p) = &a.history {
        write_text(p, &report.histories_csv())?;
    }
    info!("converged {} in {} iterations, objective {:.6}", report.converged, report.iterations, report.objective);
    if !report.converged {
        return Err(Failure::numerical(report.failure.unwrap_or_else(|| "solver did not converge".into())));
    }
    Ok(())
}

fn cmd_dataset(cli: &Cli, cfg: &RunConfig, a: &crate::args::DatasetGenArgs) -> Result<(), Failure> {
    let net = load_network(&a.case)?;
    let n = a.count.unwrap_or(cfg.sampling.n);
    let t = a.variation.unwrap_or(cfg.sampling.t);
    let seed = cli.seed.unwrap_or(cfg.sampling.seed);
    let scenarios = sample_loads(&net, n, t, seed)?;
    let (samples, rejects) = generate_dataset(&net, &scenarios, &cfg.ipm, !cli.deterministic)?;
    info!("{} samples solved, {} rejected", samples.len(), rejects.len());
    let file = File::create(&a.output).map_err(|e| Failure::io(&a.output, e))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, &samples)?;
    w.flush().map_err(|e| Failure::io(&a.output, e))?;
    if let Some(p) = &a.rejects {
        write_json(p, &rejects)?;
    }
    Ok(())
}

fn train_config(cli: &Cli, cfg: &RunConfig, epochs: Option<usize>) -> TrainConfig {
    let mut tc = cfg.train.clone();
    if let Some(e) = epochs {
        tc.epochs = e;
    }
    if let Some(s) = cli.seed {
        tc.seed = s;
    }
    tc
}

fn cmd_train(cli: &Cli, cfg: &RunConfig, a: &crate::args::TrainArgs) -> Result<(), Failure> {
    let net = load_network(&a.case)?;
    let samples = load_samples(&a.data, &net)?;
    let (tr, val) = split(&samples);
    let mut tc = train_config(cli, cfg, a.epochs);
    if let Some(b) = a.batch_size {
        tc.batch_size = b;
    }
    if let Some(lr) = a.lr {
        tc.learning_rate = lr;
    }
    if a.no_physics {
        tc.weights = LossWeights::supervised_only();
    }
    tc.validate()?;
    let topo = if a.separate_heads { build_separate_topology(&net.dims) } else { build_topology(&net.dims) };
    let mut model = MtlModel::new(topo, &tr, tc.seed)?;
    info!("training on {} samples, validating on {}", tr.len(), val.len());
    let log = train(&mut model, &net, &tr, &val, &tc)?;
    if let Some(last) = log.epochs.last() {
        info!("final training loss {:.6}", last.train.total);
    }
    write_text(&a.output, &model.to_json()?)?;
    if let Some(p) = &a.log {
        write_text(p, &log.to_csv())?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct Loads {
    pd: Vec<f64>,
    qd: Vec<f64>,
}

fn cmd_predict(a: &crate::args::PredictArgs) -> Result<(), Failure> {
    let net = load_network(&a.case)?;
    let model = load_model(&a.model, &net)?;
    let loads: Loads = read_json(&a.loads)?;
    let ws = model.predict_warm_start(&loads.pd, &loads.qd)?;
    match &a.output {
        Some(p) => write_json(p, &ws),
        None => {
            println!("{}", serde_json::to_string_pretty(&ws).map_err(|e| Failure::invalid(e.to_string()))?);
            Ok(())
        }
    }
}

fn cmd_ablate(cli: &Cli, cfg: &RunConfig, a: &crate::args::AblateArgs) -> Result<(), Failure> {
    let net = load_network(&a.case)?;
    let mut samples = load_samples(&a.data, &net)?;
    if let Some(n) = a.limit {
        samples.truncate(n);
    }
    let table = ablation_run(&net, &samples, &cfg.ipm, !cli.deterministic)?;
    write_text(&a.output, &table.to_csv())?;
    if let Some(p) = &a.json {
        write_json(p, &table)?;
    }
    Ok(())
}

fn cmd_morph(cli: &Cli, cfg: &RunConfig, a: &crate::args::MorphArgs) -> Result<(), Failure> {
    let net = load_network(&a.case)?;
    let mut model = load_model(&a.model, &net)?;
    let samples = load_samples(&a.data, &net)?;
    let (tr, val) = split(&samples);
    let mc = MorphConfig {
        target_mape: a.target_mape,
        max_iterations: a.max_iterations,
        probe: a.probe,
        train: train_config(cli, cfg, a.epochs),
        ipm: cfg.ipm.clone(),
        ..MorphConfig::default()
    };
    let outcome = quality_prior_morphism(&mut model, &net, &tr, &val, &mc)?;
    if !outcome.met {
        warn!("target MAPE {} not reached; final {:.4}", a.target_mape, outcome.final_mape);
    }
    write_text(&a.output, &model.to_json()?)?;
    if let Some(p) = &a.report {
        write_json(p, &outcome)?;
    }
    Ok(())
}

fn cmd_bench(cli: &Cli, cfg: &RunConfig, a: &crate::args::BenchArgs) -> Result<(), Failure> {
    let net = load_network(&a.case)?;
    let model = load_model(&a.model, &net)?;
    let samples = load_samples(&a.data, &net)?;
    let (_, val) = split(&samples);
    let ctx = StrategyContext { model: Some(Arc::new(model)) };
    let strategy = StrategyRegistry::default().build(&a.strategy, &ctx)?;
    let (report, rows) = bench(&net, &val, strategy.as_ref(), &cfg.ipm, !cli.deterministic)?;
    info!(
        "{}: SR {:.3}, iteration ratio {:.3}, {} fallbacks",
        report.strategy, report.sr, report.iteration_ratio, report.fallback_count
    );
    write_json(&a.output, &report)?;
    if let Some(p) = &a.csv {
        write_text(p, &results_csv(&rows))?;
    }
    Ok(())
}
