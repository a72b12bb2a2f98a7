use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use conecast::metrics::trace_run;
use conecast::tolerance::compare as compare_outputs;
use conecast::{
    convergence_curve, dense_forward, load_model, random_input, random_network, save_model, sparsity_stats, Activation,
    Engine, EngineConfig, HeadChoice, Mode, Network, RandomNetConfig, StreamAxis,
};

use crate::error::{io_error, CliError};
use crate::input::{read_input, read_labels, write_input, InputFile, InputFormat};
use crate::{
    ActivationArg, BenchArgs, CompareArgs, GenArgs, HeadArg, InputArgs, ModeArg, ModelArgs, RunArgs, StreamArgs,
};

fn debug_enabled() -> bool {
    std::env::var("CONECAST_LOG").is_ok_and(|v| v.eq_ignore_ascii_case("debug"))
}

fn load(args: &ModelArgs) -> Result<Network, CliError> {
    Ok(load_model(&args.model, &args.weights)?)
}

fn load_input(args: &InputArgs, net: &Network) -> Result<InputFile, CliError> {
    let format = args.format.unwrap_or_else(|| InputFormat::from_path(&args.input));
    read_input(&args.input, format, net.input_shape(), args.index)
}

fn engine(net: &Network, args: &StreamArgs) -> Result<Engine, CliError> {
    let mut config = EngineConfig {
        mode: match args.mode {
            ModeArg::PerRow => Mode::PerRow,
            ModeArg::PerEvent => Mode::PerEvent,
        },
        check_invariants: debug_enabled(),
        ..EngineConfig::default()
    };
    let engine = Engine::with_config(net.clone(), config)?;
    if !args.transpose {
        return Ok(engine);
    }
    config.axis = Some(match engine.axis() {
        StreamAxis::Rows => StreamAxis::Columns,
        StreamAxis::Columns => StreamAxis::Rows,
    });
    Ok(Engine::with_config(net.clone(), config)?)
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let net = load(&args.model)?;
    let file = load_input(&args.input, &net)?;
    let input = file.values;
    let mut engine = engine(&net, &args.stream)?;
    let (trace, output) = trace_run(&mut engine, &input)?;

    if let Some(path) = &args.trace {
        let mut csv = String::from("t");
        for k in 0..output.len() {
            write!(csv, ",output_{k}").unwrap();
        }
        csv.push_str(",events,live_scalars\n");
        for step in trace.steps() {
            writeln!(
                csv,
                "{},{},{},{}",
                step.step,
                join(&step.output),
                step.events,
                step.live_scalars
            )
            .unwrap();
        }
        write_file(path, &csv)?;
    }
    if let Some(path) = &args.curve {
        let mut csv = String::from("t,distance\n");
        for (t, d) in convergence_curve(&trace, &output).expect("trace covers every step") {
            writeln!(csv, "{t},{d}").unwrap();
        }
        write_file(path, &csv)?;
    }

    let stats = sparsity_stats(&trace, &input);
    let memory = engine.memory_report();
    println!("output: {}", join(&output));
    println!("argmax: {}", argmax(&output));
    if let Some(path) = &args.labels {
        let labels = read_labels(path)?;
        let label = labels
            .get(args.input.index)
            .ok_or_else(|| CliError::Input(format!("{}: no label at index {}", path.display(), args.input.index)))?;
        println!("label: {label}");
    }
    println!(
        "events: {} (per layer {:?}), nonzero input fraction {:.4}",
        stats.events_per_layer.iter().sum::<u64>(),
        stats.events_per_layer,
        stats.nonzero_input_fraction
    );
    println!(
        "peak live scalars: {} (transient {})",
        memory.peak, memory.peak_transient
    );
    if debug_enabled() {
        eprintln!(
            "debug: {:?} input, axis {:?}, mode {:?}, memory {memory:?}",
            file.format,
            engine.axis(),
            engine.mode()
        );
    }
    Ok(())
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    if args.tol.is_nan() || args.tol < 0.0 {
        return Err(CliError::Input(format!(
            "tolerance must be non-negative, got {}",
            args.tol
        )));
    }
    let net = load(&args.model)?;
    let input = load_input(&args.input, &net)?.values;
    let expected = dense_forward(&net, &input)?;
    let streamed = engine(&net, &args.stream)?.run(&input, |_| {})?;
    let d = compare_outputs(&streamed, &expected, args.tol, args.tol * 1e-3);
    println!("streamed: {}", join(&streamed));
    println!("reference: {}", join(&expected));
    println!("max abs diff: {:e}", d.max_abs);
    println!("max rel diff: {:e}", d.max_rel);
    if d.within() {
        println!("within tolerance {}", args.tol);
        Ok(())
    } else {
        println!(
            "component {} exceeds tolerance {}",
            d.first_violation.unwrap(),
            args.tol
        );
        Err(CliError::Tolerance)
    }
}

fn parse_sweep(text: &str) -> Result<Vec<(usize, usize)>, CliError> {
    let bad = || CliError::Input(format!("sweep must look like \"HxW,HxW\", got {text:?}"));
    let sizes = text
        .split(',')
        .map(|item| {
            let (h, w) = item.trim().split_once(['x', 'X']).ok_or_else(bad)?;
            Ok((
                h.trim().parse().map_err(|_| bad())?,
                w.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    if sizes.is_empty() {
        return Err(bad());
    }
    Ok(sizes)
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Slope of peak against one coordinate, over the largest group of runs that
/// share the other coordinate.
fn fitted_growth(rows: &[(usize, usize, usize)], vary_width: bool) -> Option<f64> {
    let key = |r: &(usize, usize, usize)| if vary_width { r.0 } else { r.1 };
    let mut best: Option<Vec<(f64, f64)>> = None;
    for fixed in rows.iter().map(key) {
        let group: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| key(r) == fixed && r.2 > 0)
            .map(|r| ((if vary_width { r.1 } else { r.0 }) as f64, r.2 as f64))
            .collect();
        if best.as_ref().is_none_or(|b| group.len() > b.len()) {
            best = Some(group);
        }
    }
    log_slope(&best?)
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let net = load(&args.model)?;
    let sizes = parse_sweep(&args.sweep)?;
    if !(0.0..=1.0).contains(&args.density) {
        return Err(CliError::Input(format!(
            "density must lie in [0, 1], got {}",
            args.density
        )));
    }
    let mut csv = String::from("H,W,peak_live_scalars,total_events,wall_time\n");
    let mut peaks = Vec::new();
    for (i, &(h, w)) in sizes.iter().enumerate() {
        let sized = net.with_input_size(h, w)?;
        let input = random_input(args.seed.wrapping_add(i as u64), sized.input_shape(), args.density);
        let mut engine = engine(&sized, &args.stream)?;
        let start = Instant::now();
        engine.run(&input, |_| {})?;
        let elapsed = start.elapsed().as_secs_f64();
        let peak = engine.memory_report().peak;
        let events: u64 = engine.events_per_layer().iter().sum();
        writeln!(csv, "{h},{w},{peak},{events},{elapsed:.6}").unwrap();
        peaks.push((h, w, peak));
    }
    let mut summary = String::new();
    for (name, vary_width) in [("W", true), ("H", false)] {
        match fitted_growth(&peaks, vary_width) {
            Some(slope) => writeln!(summary, "peak ~ {name}^{slope:.3}").unwrap(),
            None => writeln!(summary, "peak ~ {name}^?: sweep does not vary {name}").unwrap(),
        }
    }
    match &args.out {
        Some(path) => {
            write_file(path, &csv)?;
            print!("{summary}");
        }
        None => {
            print!("{csv}");
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn parse_range(name: &str, text: &str) -> Result<std::ops::RangeInclusive<usize>, CliError> {
    let bad = || CliError::Input(format!("--{name} must be N or N-M, got {text:?}"));
    let (lo, hi) = match text.split_once('-') {
        Some((lo, hi)) => (
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
        ),
        None => {
            let n = text.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    Ok(lo..=hi)
}

pub fn gen(args: &GenArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.density) {
        return Err(CliError::Input(format!(
            "density must lie in [0, 1], got {}",
            args.density
        )));
    }
    let config = RandomNetConfig {
        depth: args.depth,
        height: parse_range("height", &args.height)?,
        width: parse_range("width", &args.width)?,
        channels: parse_range("channels", &args.channels)?,
        max_kernel: args.max_kernel,
        activation: match args.activation {
            ActivationArg::Identity => Some(Activation::Identity),
            ActivationArg::Relu => Some(Activation::Relu),
            ActivationArg::Tanh => Some(Activation::Tanh),
            ActivationArg::Mixed => None,
        },
        head: match args.head {
            HeadArg::None => HeadChoice::None,
            HeadArg::Gap => HeadChoice::GlobalAverage,
            HeadArg::GapDense => HeadChoice::GlobalAverageDense,
            HeadArg::Dense => HeadChoice::Dense,
            HeadArg::Any => HeadChoice::Any,
        },
        head_outputs: parse_range("outputs", &args.outputs)?,
        allow_stride: !args.no_stride,
        allow_same: !args.no_same,
    };
    let net = random_network(args.seed, &config)?;
    save_model(&net, &args.model, &args.weights)?;
    let shape = net.input_shape();
    println!(
        "model: input {shape}, {} layers, {} parameters, output length {}",
        net.layers().len(),
        net.parameter_count(),
        net.output_len()
    );
    if let Some(path) = &args.input {
        let format = args.format.unwrap_or_else(|| InputFormat::from_path(path));
        write_input(path, format, &random_input(args.seed, shape, args.density))?;
        println!("input: {}", path.display());
    }
    Ok(())
}
