//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use conecast::metrics::trace_run;
use conecast::model::rng::FixtureRng;
use conecast::tolerance::{compare, ABS_FLOOR, REL_TOL};
use conecast::{
    convergence_curve, dense_forward, load_model, random_input, random_network, save_model, Activation, ConvLayer,
    Engine, EngineConfig, HeadChoice, LayerSpec, Mode, ModelError, Network, NetworkSpec, Padding, RandomNetConfig,
    Shape3, StreamAxis, Tensor3,
};

const ORACLE_CASES: u64 = 200;
const PREFIX_CASES: u64 = 50;
const MODE_CASES: u64 = 50;
const FORMAT_CASES: u64 = 50;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
/// Allowed deviation of a peak-memory ratio from the width ratio.
const WIDTH_RATIO_SLACK: f64 = 0.15;
const CONVERGED: f64 = 1e-9;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

/// Random case `i`: 1-4 conv layers, widths and heights up to 16, up to 8
/// channels, activations drawn per layer, any head.
fn case(i: u64) -> (Network, Tensor3) {
    let cfg = RandomNetConfig {
        depth: 1 + (i % 4) as usize,
        height: 1..=16,
        width: 1..=16,
        channels: 1..=8,
        activation: None,
        head: HeadChoice::Any,
        ..RandomNetConfig::default()
    };
    let net = random_network(1000 + i, &cfg).expect("feasible config");
    let density = [1.0, 0.7, 0.4, 0.1][(i % 4) as usize];
    let input = random_input(5000 + i, net.input_shape(), density);
    (net, input)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..ORACLE_CASES {
        let (net, input) = case(i);
        let expected = dense_forward(&net, &input).map_err(|e| e.to_string())?;
        let got = Engine::new(net, Mode::PerRow)
            .and_then(|mut e| e.run(&input, |_| {}))
            .map_err(|e| format!("case {i}: {e}"))?;
        let d = compare(&got, &expected, REL_TOL, ABS_FLOOR);
        if !d.within() {
            return Err(format!("case {i}: {d:?}"));
        }
        worst = worst.max(d.max_abs);
    }
    let elapsed = start.elapsed();
    if elapsed > ORACLE_BUDGET {
        return Err(format!("took {elapsed:?}, budget {ORACLE_BUDGET:?}"));
    }
    Ok(format!(
        "{ORACLE_CASES} cases, worst abs diff {worst:.2e}, {elapsed:.2?}"
    ))
}

fn prefix_consistency() -> Outcome {
    let mut checks = 0;
    for i in 0..PREFIX_CASES {
        let (net, input) = case(i);
        let mut engine = Engine::new(net.clone(), Mode::PerRow).map_err(|e| e.to_string())?;
        for t in 0..engine.stream_len() {
            let out = engine
                .push_row(&engine.input_slice(&input, t))
                .map_err(|e| e.to_string())?;
            let prefix = match engine.axis() {
                StreamAxis::Rows => input.zero_rows_from(t + 1),
                StreamAxis::Columns => input.zero_cols_from(t + 1),
            };
            let expected = dense_forward(&net, &prefix).map_err(|e| e.to_string())?;
            let d = compare(&out, &expected, REL_TOL, ABS_FLOOR);
            if !d.within() {
                return Err(format!("case {i}, after row {}: {d:?}", t + 1));
            }
            checks += 1;
        }
    }
    Ok(format!("{PREFIX_CASES} cases, {checks} prefixes"))
}

/// Two 3x1 valid convolutions and an averaging output unit.
fn three_tap_pair(len: usize, seed: u64) -> Network {
    let mut rng = FixtureRng::new(seed);
    let mut conv = || {
        LayerSpec::Conv(ConvLayer {
            kernel: (1, 3),
            stride: (1, 1),
            padding: Padding::Valid,
            in_channels: 1,
            out_channels: 1,
            activation: Activation::Tanh,
            weights: (0..3).map(|_| rng.symmetric_f32()).collect(),
            bias: vec![0.0],
        })
    };
    let layers = vec![conv(), conv(), LayerSpec::GlobalAverage];
    NetworkSpec::new(Shape3::new(1, len, 1), layers).validate().unwrap()
}

fn constant_memory_1d() -> Outcome {
    let mut peaks = Vec::new();
    for len in [16, 64, 256] {
        let net = three_tap_pair(len, 3);
        let input = random_input(len as u64, net.input_shape(), 1.0);
        for mode in [Mode::PerRow, Mode::PerEvent] {
            let mut engine = Engine::new(net.clone(), mode).map_err(|e| e.to_string())?;
            for i in 0..len {
                engine.push_element(&input.column(i)).map_err(|e| e.to_string())?;
            }
            let out = engine.finalize().map_err(|e| e.to_string())?;
            let d = compare(&out, &dense_forward(&net, &input).unwrap(), REL_TOL, ABS_FLOOR);
            if !d.within() {
                return Err(format!("length {len} {mode:?}: output mismatch {d:?}"));
            }
            peaks.push((len, mode, engine.memory_report().peak));
        }
    }
    if peaks.iter().any(|&(_, _, p)| p != 7) {
        return Err(format!("peaks {peaks:?}, expected 7 everywhere"));
    }
    Ok("peak live scalars 7 at lengths 16, 64, 256 (both modes)".into())
}

fn square_root_memory_2d() -> Outcome {
    let conv = |cin: usize, seed: u64| {
        let mut rng = FixtureRng::new(seed);
        LayerSpec::Conv(ConvLayer {
            kernel: (3, 3),
            stride: (1, 1),
            padding: Padding::Same,
            in_channels: cin,
            out_channels: 4,
            activation: Activation::Tanh,
            weights: (0..4 * cin * 9).map(|_| rng.symmetric_f32()).collect(),
            bias: vec![0.0; 4],
        })
    };
    let base = NetworkSpec::new(
        Shape3::new(128, 8, 1),
        vec![conv(1, 1), conv(4, 2), conv(4, 3), LayerSpec::GlobalAverage],
    )
    .validate()
    .unwrap();
    let peak = |rows: usize, cols: usize| -> Result<(usize, usize), String> {
        let net = base.with_input_size(rows, cols).map_err(|e| e.to_string())?;
        let input = random_input((rows * 1000 + cols) as u64, net.input_shape(), 1.0);
        let mut engine = Engine::new(net, Mode::PerRow).map_err(|e| e.to_string())?;
        engine.run(&input, |_| {}).map_err(|e| e.to_string())?;
        let r = engine.memory_report();
        Ok((r.peak, r.peak_transient))
    };

    let widths = [8usize, 16, 32];
    let by_width = widths.iter().map(|&w| peak(128, w)).collect::<Result<Vec<_>, _>>()?;
    for a in 0..widths.len() {
        for b in a + 1..widths.len() {
            let want = widths[b] as f64 / widths[a] as f64;
            let got = by_width[b].0 as f64 / by_width[a].0 as f64;
            if (got / want - 1.0).abs() > WIDTH_RATIO_SLACK {
                return Err(format!(
                    "peak ratio W={}/W={}: {got:.3}, width ratio {want}",
                    widths[b], widths[a]
                ));
            }
        }
    }
    let heights = [32usize, 64, 128];
    let by_height = heights.iter().map(|&h| peak(h, 32)).collect::<Result<Vec<_>, _>>()?;
    if by_height.iter().any(|p| p.0 != by_height[0].0) {
        return Err(format!("peaks vary with height: {by_height:?}"));
    }
    Ok(format!(
        "peaks by width {:?}, by height {:?} (transient peaks {:?} / {:?})",
        by_width.iter().map(|p| p.0).collect::<Vec<_>>(),
        by_height.iter().map(|p| p.0).collect::<Vec<_>>(),
        by_width.iter().map(|p| p.1).collect::<Vec<_>>(),
        by_height.iter().map(|p| p.1).collect::<Vec<_>>(),
    ))
}

fn sparsity() -> Outcome {
    for i in 0..40 {
        let (net, input) = case(i);
        let zeros = Tensor3::zeros(input.shape());
        for mode in [Mode::PerRow, Mode::PerEvent] {
            let mut engine = Engine::new(net.clone(), mode).map_err(|e| e.to_string())?;
            let out = engine.run(&zeros, |_| {}).map_err(|e| e.to_string())?;
            if engine.events_per_layer().iter().any(|&e| e != 0) || out.iter().any(|&v| v != 0.0) {
                return Err(format!(
                    "case {i} {mode:?}: events {:?} on zero input",
                    engine.events_per_layer()
                ));
            }
            if engine.memory_report().peak_transient != 0 {
                return Err(format!("case {i} {mode:?}: state allocated on zero input"));
            }
        }
    }

    let mut worst = 0;
    for padding in [Padding::Valid, Padding::Same] {
        let mut rng = FixtureRng::new(9);
        let spec = NetworkSpec::new(
            Shape3::new(9, 9, 1),
            vec![
                LayerSpec::Conv(ConvLayer {
                    kernel: (3, 3),
                    stride: (1, 1),
                    padding,
                    in_channels: 1,
                    out_channels: 1,
                    activation: Activation::Relu,
                    weights: (0..9).map(|_| rng.symmetric_f32()).collect(),
                    bias: vec![0.0],
                }),
                LayerSpec::GlobalAverage,
            ],
        );
        let net = spec.validate().unwrap();
        for r in 0..9 {
            for c in 0..9 {
                let mut input = Tensor3::zeros(net.input_shape());
                input.set(r, c, 0, 1.0);
                let config = EngineConfig {
                    record_events: true,
                    ..EngineConfig::default()
                };
                let mut engine = Engine::with_config(net.clone(), config).map_err(|e| e.to_string())?;
                engine.run(&input, |_| {}).map_err(|e| e.to_string())?;
                let touched = engine.contributions_per_layer()[0];
                worst = worst.max(touched);
                if touched > 9 {
                    return Err(format!("{padding:?} pixel ({r},{c}) touched {touched} layer-1 states"));
                }
            }
        }
    }
    Ok(format!(
        "zero input: 0 events on 40 nets x 2 modes; single pixel: at most {worst} layer-1 states"
    ))
}

fn mode_independence() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..MODE_CASES {
        let (net, input) = case(i);
        let a = Engine::new(net.clone(), Mode::PerRow)
            .and_then(|mut e| e.run(&input, |_| {}))
            .map_err(|e| e.to_string())?;
        let b = Engine::new(net, Mode::PerEvent)
            .and_then(|mut e| e.run(&input, |_| {}))
            .map_err(|e| e.to_string())?;
        let d = compare(&a, &b, REL_TOL, ABS_FLOOR);
        if !d.within() {
            return Err(format!("case {i}: {d:?}"));
        }
        worst = worst.max(d.max_abs);
    }
    Ok(format!("{MODE_CASES} cases, worst abs diff {worst:.2e}"))
}

fn convergence() -> Outcome {
    let cfg = RandomNetConfig {
        depth: 3,
        height: 28..=28,
        width: 28..=28,
        channels: 1..=4,
        activation: Some(Activation::Tanh),
        head: HeadChoice::GlobalAverageDense,
        head_outputs: 10..=10,
        allow_stride: false,
        ..RandomNetConfig::default()
    };
    let mut net = random_network(4, &cfg).unwrap();
    // One input channel so the blob below is well defined.
    if net.input_shape().channels != 1 {
        net = random_network(5, &RandomNetConfig { channels: 1..=1, ..cfg }).unwrap();
    }
    let shape = net.input_shape();
    let mut input = Tensor3::zeros(shape);
    // Centered blob; rows 0..10 stay zero.
    for r in 10..shape.rows {
        for c in 0..shape.cols {
            let (dr, dc) = (r as f64 - 17.0, c as f64 - 13.5);
            let v = (-(dr * dr + dc * dc) / 30.0).exp();
            if v > 1e-3 {
                input.set(r, c, 0, v);
            }
        }
    }
    let mut engine = Engine::new(net, Mode::PerRow).map_err(|e| e.to_string())?;
    let (trace, out) = trace_run(&mut engine, &input).map_err(|e| e.to_string())?;
    if out.iter().all(|&v| v == 0.0) {
        return Err("final output is all zeros".into());
    }
    let curve = convergence_curve(&trace, &out).map_err(|e| e.to_string())?;
    if curve.len() != shape.rows {
        return Err(format!("curve has {} points, expected {}", curve.len(), shape.rows));
    }
    if let Some(p) = curve[..10].iter().find(|p| p.1 != 1.0) {
        return Err(format!("step {} distance {} during zero prefix", p.0, p.1));
    }
    let last = curve.last().unwrap().1;
    if last > CONVERGED {
        return Err(format!("final distance {last}"));
    }
    Ok(format!(
        "1.0 for steps 1-10, {:.3} at step 17, {last:.1e} at step {}",
        curve[16].1, shape.rows
    ))
}

fn format_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (m, b) = (dir.path().join("model.json"), dir.path().join("weights.bin"));
    for i in 0..FORMAT_CASES {
        let (net, _) = case(i);
        save_model(&net, &m, &b).map_err(|e| e.to_string())?;
        let back = load_model(&m, &b).map_err(|e| e.to_string())?;
        if back != net || !bitwise_equal(&back, &net) {
            return Err(format!("case {i} changed in round trip"));
        }
    }
    let (net, _) = case(7);
    save_model(&net, &m, &b).map_err(|e| e.to_string())?;
    let blob = std::fs::read(&b).map_err(|e| e.to_string())?;
    std::fs::write(&b, &blob[..blob.len() - 4]).map_err(|e| e.to_string())?;
    match load_model(&m, &b) {
        Err(ModelError::SizeMismatch { .. }) => {}
        other => return Err(format!("truncated blob gave {other:?}")),
    }
    std::fs::write(&b, &blob).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&m).map_err(|e| e.to_string())?;
    std::fs::write(&m, text.replacen("\"version\": 1", "\"version\": \"2\"", 1)).map_err(|e| e.to_string())?;
    match load_model(&m, &b) {
        Err(ModelError::Format(_)) => {}
        other => return Err(format!("version 2 gave {other:?}")),
    }
    Ok(format!(
        "{FORMAT_CASES} models bitwise identical; SizeMismatch and Format errors raised"
    ))
}

fn bitwise_equal(a: &Network, b: &Network) -> bool {
    let params = |n: &Network| -> Vec<u32> {
        n.layers()
            .iter()
            .flat_map(|l| match l {
                LayerSpec::Conv(c) => c.weights.iter().chain(&c.bias).map(|v| v.to_bits()).collect(),
                LayerSpec::Dense(d) => d.weights.iter().chain(&d.bias).map(|v| v.to_bits()).collect(),
                LayerSpec::GlobalAverage => Vec::new(),
            })
            .collect()
    };
    params(a) == params(b)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 oracle equivalence", oracle_equivalence),
        ("2 prefix consistency", prefix_consistency),
        ("3 1D constant memory", constant_memory_1d),
        ("4 2D memory grows with width only", square_root_memory_2d),
        ("5 sparsity", sparsity),
        ("6 mode independence", mode_independence),
        ("7 convergence curve", convergence),
        ("8 format round trip", format_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
