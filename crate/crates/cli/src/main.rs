use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use quatline::diff_lab::{extract_frame, extract_jet3, FrameData};
use quatline::map_zoo::synth_from_jet;
use quatline::verifier::{lemma1_oracle, seeded_segments, verify, Ball, Segment, VerifyConfig, MIN_SAMPLES};
use quatline::{eval, exec, Error, Jet3, MapSpec, Quaternion, Side};

const JET_TOL: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "quatline", version, about = "Check quaternionic maps for the lines-to-circles property")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample lines and run the full residual suite; exit 1 if any check fails.
    Verify {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Print A, B, C, the side report and the 3-jet at each point.
    Extract {
        #[command(flatten)]
        map: MapArgs,
        /// Point as "w,x1,x2,x3" (a single number means a real point). Repeatable.
        #[arg(long = "point", allow_hyphen_values = true, required = true, value_parser = parse_quat)]
        points: Vec<Quaternion>,
        /// Force a side instead of detecting it.
        #[arg(long, value_enum)]
        side: Option<SideArg>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Build a classical projection with the admissible 3-jet (p, q, C) and check it.
    Synth {
        #[arg(long, allow_hyphen_values = true, value_parser = parse_covector, default_value = "0,0,0,0")]
        p: [f64; 4],
        #[arg(long, allow_hyphen_values = true, value_parser = parse_quat, default_value = "0,0,0,0")]
        q: Quaternion,
        #[arg(long = "C", allow_hyphen_values = true, value_parser = parse_f64, default_value = "0")]
        c: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write mapped samples of segments for plotting.
    DumpSegments {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Base point of a single explicit segment (with --alpha).
        #[arg(long, allow_hyphen_values = true, value_parser = parse_quat, requires = "alpha")]
        x0: Option<Quaternion>,
        /// Direction of the explicit segment.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_quat, requires = "x0")]
        alpha: Option<Quaternion>,
        /// Parameter interval of the explicit segment as "t0,t1".
        #[arg(long, allow_hyphen_values = true, value_parser = parse_interval, default_value = "-1,1")]
        t_range: [f64; 2],
        #[command(flatten)]
        out: OutArgs,
    },
    /// Test whether a·y + b·y⁻¹ is constant over the conjugates y of x; exit 1 if not.
    Lemma1 {
        #[arg(long, allow_hyphen_values = true, value_parser = parse_quat)]
        a: Quaternion,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_quat)]
        x: Quaternion,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_quat)]
        b: Quaternion,
        #[arg(long, default_value_t = 64)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct MapArgs {
    /// Map spec as inline JSON, e.g. '{"type":"model","lambda":1}'.
    #[arg(long, conflicts_with = "map_file", required_unless_present = "map_file")]
    map: Option<String>,
    /// Path to a JSON map spec.
    #[arg(long)]
    map_file: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, allow_hyphen_values = true, value_parser = parse_quat, default_value = "0,0,0,0")]
    center: Quaternion,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_f64, default_value = "0.4")]
    radius: f64,
    #[arg(long, default_value_t = 50)]
    segments: usize,
    #[arg(long, default_value_t = 9)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_f64, default_value = "1e-7")]
    tol_circle: f64,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_f64, default_value = "1e-5")]
    tol_residual: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct OutArgs {
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Left => Side::Left,
            SideArg::Right => Side::Right,
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_f64).collect()
}

fn parse_quat(s: &str) -> Result<Quaternion, String> {
    match parse_list(s)?[..] {
        [w] => Ok(Quaternion::real(w)),
        [w, x1, x2, x3] => Ok(Quaternion::new(w, x1, x2, x3)),
        _ => Err(format!("{s:?}: expected 1 or 4 comma-separated numbers")),
    }
}

fn parse_covector(s: &str) -> Result<[f64; 4], String> {
    parse_list(s)?.try_into().map_err(|_| format!("{s:?}: expected 4 comma-separated numbers"))
}

fn parse_interval(s: &str) -> Result<[f64; 2], String> {
    parse_list(s)?.try_into().map_err(|_| format!("{s:?}: expected \"t0,t1\""))
}

/// Failure with exit code 2.
struct Fatal(String);

impl From<Error> for Fatal {
    fn from(e: Error) -> Self {
        Fatal(e.to_string())
    }
}

type Res<T> = Result<T, Fatal>;

impl MapArgs {
    fn load(&self) -> Res<MapSpec> {
        let text = match (&self.map, &self.map_file) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => std::fs::read_to_string(p).map_err(|e| Fatal(format!("{}: {e}", p.display())))?,
            (None, None) => return Err(Fatal("a map is required (--map or --map-file)".into())),
        };
        let spec: MapSpec = serde_json::from_str(&text).map_err(|e| Fatal(format!("invalid map spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

impl SweepArgs {
    fn config(&self) -> Res<VerifyConfig> {
        let cfg = VerifyConfig {
            ball: Ball { center: self.center, radius: self.radius },
            segments: self.segments,
            samples: self.samples,
            points: self.points,
            tol_circle: self.tol_circle,
            tol_residual: self.tol_residual,
            seed: self.seed,
            ..VerifyConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl OutArgs {
    fn emit(&self, text: &str) -> Res<()> {
        match &self.out {
            Some(p) => std::fs::write(p, text).map_err(|e| Fatal(format!("{}: {e}", p.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn json<T: Serialize>(v: &T) -> Res<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Fatal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// 17 significant digits, '.' decimal point.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn quat_cells(q: Quaternion) -> String {
    q.to_array().map(num).join(",")
}

fn cmd_verify(map: &MapArgs, sweep: &SweepArgs, out: &OutArgs) -> Res<bool> {
    let spec = map.load()?;
    let report = verify(&spec, &sweep.config()?)?;
    let text = match out.format {
        Format::Json => json(&report)?,
        Format::Csv => {
            let mut s = String::from("check,value,tolerance,pass\n");
            for v in &report.verdicts {
                let _ = writeln!(s, "{},{},{},{}", v.check, num(v.value), num(v.tolerance), v.pass);
            }
            s
        }
    };
    out.emit(&text)?;
    Ok(report.pass)
}

#[derive(Serialize)]
struct ExtractRecord {
    frame: FrameData,
    jet: Jet3,
}

fn cmd_extract(map: &MapArgs, points: &[Quaternion], side: Option<SideArg>, out: &OutArgs) -> Res<()> {
    let spec = map.load()?;
    let records: Vec<ExtractRecord> = points
        .iter()
        .map(|&x| {
            let frame = extract_frame(&spec, x, side.map(Side::from))?;
            Ok(ExtractRecord { jet: frame.jet(), frame })
        })
        .collect::<Result<_, Error>>()?;
    let text = match out.format {
        Format::Json => json(&records)?,
        Format::Csv => {
            let mut s = String::from("w,x1,x2,x3,detected,side,C_w,C_x1,C_x2,C_x3,c_consistency,third_order_residual\n");
            for r in &records {
                let f = &r.frame;
                let _ = writeln!(
                    s,
                    "{},{:?},{:?},{},{},{}",
                    quat_cells(f.point),
                    f.side_report.side,
                    f.side,
                    quat_cells(f.c),
                    num(f.c_consistency),
                    num(f.third_order_residual)
                );
            }
            s
        }
    };
    out.emit(&text)
}

#[derive(Serialize)]
struct SynthReport {
    spec: MapSpec,
    expected: Jet3,
    extracted: Jet3,
    max_coefficient_error: f64,
    third_order_residual: f64,
    tolerance: f64,
    pass: bool,
}

fn cmd_synth(p: [f64; 4], q: Quaternion, c: f64, out: &OutArgs) -> Res<bool> {
    let spec = synth_from_jet(p, q, c)?;
    let expected = Jet3::admissible(p, q, c);
    let got = extract_jet3(&spec, Quaternion::ZERO, Side::Left)?;
    let e = got.jet;
    let err = [e.f0.dist(expected.f0), (e.a - expected.a).max_norm(), (e.b - expected.b).max_norm(), e.c.dist(expected.c)]
        .into_iter()
        .fold(0.0, f64::max);
    let report = SynthReport {
        spec,
        expected,
        extracted: e,
        max_coefficient_error: err,
        third_order_residual: got.third_order_residual,
        tolerance: JET_TOL,
        pass: err <= JET_TOL,
    };
    let text = match out.format {
        Format::Json => json(&report)?,
        Format::Csv => format!(
            "max_coefficient_error,third_order_residual,tolerance,pass\n{},{},{},{}\n",
            num(report.max_coefficient_error),
            num(report.third_order_residual),
            num(report.tolerance),
            report.pass
        ),
    };
    out.emit(&text)?;
    Ok(report.pass)
}

#[derive(Serialize)]
struct SampleRow {
    segment: usize,
    t: f64,
    preimage: Quaternion,
    image: Quaternion,
}

fn cmd_dump(map: &MapArgs, sweep: &SweepArgs, single: Option<Segment>, out: &OutArgs) -> Res<()> {
    if sweep.samples < MIN_SAMPLES {
        return Err(Fatal(format!("--samples must be at least {MIN_SAMPLES}")));
    }
    let spec = map.load()?;
    let segs = match single {
        Some(s) => vec![s],
        None => {
            seeded_segments(&spec, &sweep.config()?)?
        }
    };
    let mut rows = Vec::new();
    for (id, seg) in segs.iter().enumerate() {
        for t in seg.params(sweep.samples) {
            let x = seg.point(t);
            rows.push(SampleRow { segment: id, t, preimage: x, image: eval(&spec, x)? });
        }
    }
    let text = match out.format {
        Format::Json => json(&rows)?,
        Format::Csv => {
            let mut s = String::from("segment,t,x_w,x_x1,x_x2,x_x3,f_w,f_x1,f_x2,f_x3\n");
            for r in &rows {
                let _ = writeln!(s, "{},{},{},{}", r.segment, num(r.t), quat_cells(r.preimage), quat_cells(r.image));
            }
            s
        }
    };
    out.emit(&text)
}

fn cmd_lemma1(a: Quaternion, x: Quaternion, b: Quaternion, trials: usize, seed: u64, out: &OutArgs) -> Res<bool> {
    let r = lemma1_oracle(a, x, b, trials, seed)?;
    let text = match out.format {
        Format::Json => json(&r)?,
        Format::Csv => format!("is_constant,spread,tolerance\n{},{},{}\n", r.is_constant, num(r.spread), num(r.tolerance)),
    };
    out.emit(&text)?;
    Ok(r.is_constant)
}

fn run(cli: Cli) -> Res<bool> {
    match cli.command {
        Command::Verify { map, sweep, out } => cmd_verify(&map, &sweep, &out),
        Command::Extract { map, points, side, out } => cmd_extract(&map, &points, side, &out).map(|_| true),
        Command::Synth { p, q, c, out } => cmd_synth(p, q, c, &out),
        Command::DumpSegments { map, sweep, x0, alpha, t_range, out } => {
            let single = match (x0, alpha) {
                (Some(x0), Some(alpha)) => Some(Segment::new(x0, alpha, t_range)?),
                _ => None,
            };
            cmd_dump(&map, &sweep, single, &out).map(|_| true)
        }
        Command::Lemma1 { a, x, b, trials, seed, out } => cmd_lemma1(a, x, b, trials, seed, &out),
    }
}

fn main() -> ExitCode {
    exec::configure_threads_from_env();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
