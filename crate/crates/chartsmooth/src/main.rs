use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use chartsmooth::formats::{load_atlas, load_metric, load_torus, write_json};
use chartsmooth::pipeline::{run_pipeline, PipelineConfig};
use chartsmooth::plot::emit_plot_data;
use chartsmooth::stages::{self, CalibrationBlock, ChartSource, PatchSettings, Probe, Resolution, SmoothScale};
use chartsmooth::REPORT_SCHEMA;
use chartsmooth_core::cell::{CellDeviation, OracleFrame};
use chartsmooth_core::embedding::PullbackField;
use chartsmooth_core::norms::Flavor;
use chartsmooth_core::patchwork::GlobalMetric;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "chartsmooth", version, about = "Smooth chart metrics and check the result")]
struct Cli {
    /// Print the JSON schema of pipeline reports and exit.
    #[arg(long)]
    schema: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured stages and write report.json, timings.json and CSVs.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Atlas norm on one scale.
    Norm {
        #[arg(long)]
        atlas: PathBuf,
        #[arg(long)]
        scale: f64,
        /// `c` or `l`, optionally followed by `,harmonic` and `,weak`.
        #[arg(long, default_value = "c")]
        flavor: String,
        #[arg(long, default_value_t = 0)]
        k: usize,
        #[arg(long, conflicts_with = "p")]
        alpha: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one cell problem.
    Cell {
        #[command(flatten)]
        chart: ChartArgs,
        /// Centre in chart coordinates, snapped to the grid.
        #[arg(long, value_parser = parse_point, default_value = "0,0")]
        center: [f64; 2],
        #[arg(long, value_enum, default_value = "frozen")]
        frame: Frame,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pull-back metric of the averaged embedding.
    Smooth {
        #[command(flatten)]
        chart: ChartArgs,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Curvature estimates of the pull-back metric; also writes a CSV next to `--out`.
    Curvature {
        #[command(flatten)]
        chart: ChartArgs,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smooth a flat torus chart by chart and glue the results.
    Patch {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        i0: f64,
        #[arg(long, default_value_t = 3)]
        net_stride: usize,
        #[arg(long, default_value_t = 2.0)]
        margin: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ChartArgs {
    #[arg(long)]
    metric: PathBuf,
    #[arg(long)]
    i0: f64,
    /// Resample the generator with this many grid steps per cell radius.
    #[arg(long)]
    steps: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    margin: f64,
    /// Only evaluate within this radius of the chart centre.
    #[arg(long)]
    probe_radius: Option<f64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Frame {
    Chart,
    Frozen,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v[..] {
        [x, y] => Ok([x, y]),
        _ => Err("expected `x,y`".into()),
    }
}

impl ChartArgs {
    fn load(&self) -> anyhow::Result<(ChartSource, chartsmooth_core::metric::MetricField, Probe)> {
        let (spec, base) = load_metric(&self.metric)?;
        let src = ChartSource::new(spec, base);
        let probe = Probe { radius: self.probe_radius, spacing: None };
        let res = Resolution { steps_per_radius: self.steps, margin: self.margin };
        let m = src.metric_at(self.i0, &res, &probe)?.into_owned();
        stages::check_scale(&m, self.i0)?;
        Ok((src, m, probe))
    }
}

#[derive(Serialize)]
struct CellNode {
    x: f64,
    y: f64,
    h: f64,
    distance: f64,
    /// Present on the interior region.
    grad: Option<[f64; 2]>,
    /// `[h_xx, h_xy, h_yy]` on the interior region.
    hess: Option<[f64; 3]>,
}

#[derive(Serialize)]
struct CellOutput {
    i0: f64,
    center: [f64; 2],
    spacing: f64,
    deviation: CellDeviation,
    unknowns: usize,
    iterations: usize,
    residual: f64,
    nodes: Vec<CellNode>,
}

#[derive(Serialize)]
struct SmoothOutput {
    calibration: CalibrationBlock,
    scale: SmoothScale,
    field: PullbackField,
}

#[derive(Serialize)]
struct PatchOutput {
    stage: stages::PatchStage,
    global: GlobalMetric,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if cli.schema {
        print!("{REPORT_SCHEMA}");
        return Ok(true);
    }
    let Some(command) = cli.command else {
        bail!("no subcommand given; see --help");
    };
    match command {
        Command::Pipeline { config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let Some(dir) = out.or_else(|| cfg.output.clone()) else {
                bail!("{}: no output directory; pass --out", config.display());
            };
            let report = run_pipeline(&cfg)?;
            write_json(&dir.join("report.json"), &report)?;
            let timings: serde_json::Map<String, serde_json::Value> =
                report.timings.iter().map(|(k, v)| (k.clone(), (*v).into())).collect();
            write_json(&dir.join("timings.json"), &timings)?;
            emit_plot_data(&report, &dir)?;
            for g in &report.gates {
                let op = if g.strict { "<" } else { "<=" };
                let verdict = if g.passed { "pass" } else { "FAIL" };
                eprintln!("{verdict} {}: {:.6e} {op} {:.6e}", g.name, g.value, g.limit);
            }
            Ok(report.passed)
        }
        Command::Norm { atlas, scale, flavor, k, alpha, p, out } => {
            let exponent = match (alpha, p, flavor.trim_start().starts_with('l')) {
                (_, Some(p), true) => p,
                (_, None, true) => bail!("the `l` flavor needs --p"),
                (Some(a), _, false) => a,
                (None, Some(_), false) => bail!("the `c` flavor takes --alpha, not --p"),
                (None, None, false) => 0.5,
            };
            let flavor = Flavor::parse(&flavor, exponent)?;
            let atlas = load_atlas(&atlas)?;
            let report = stages::norm_report(&atlas, scale, &flavor, k)?;
            write_json(&out, &report)?;
            Ok(true)
        }
        Command::Cell { chart, center, frame, out } => {
            let (_, m, _) = chart.load()?;
            let frame = match frame {
                Frame::Chart => OracleFrame::Chart,
                Frame::Frozen => OracleFrame::FrozenAtCenter,
            };
            let d = m.domain();
            let node = d.nearest_node(&center);
            if !d.is_masked(node) {
                bail!("centre {center:?} lies outside the chart");
            }
            let sol = chartsmooth_core::cell::solve_cell(&m, node, chart.i0, &Default::default())?;
            let deviation = chartsmooth_core::cell::cell_deviation_report(&sol, &m, frame);
            let interior: std::collections::BTreeSet<_> = sol.interior.iter().copied().collect();
            let nodes = sol
                .bbox
                .nodes()
                .filter(|p| sol.in_ball(*p))
                .map(|p| {
                    let x = d.coords(p);
                    let inner = interior.contains(&p);
                    let g = sol.grad_at(p);
                    let h = sol.hess_at(p);
                    CellNode {
                        x: x[0],
                        y: x[1],
                        h: sol.value_at(p),
                        distance: sol.dist_at(p),
                        grad: inner.then_some([g[0], g[1]]),
                        hess: inner.then_some([h.a[0][0], h.a[0][1], h.a[1][1]]),
                    }
                })
                .collect();
            let x = d.coords(node);
            let o = CellOutput {
                i0: chart.i0,
                center: [x[0], x[1]],
                spacing: d.spacing(),
                deviation,
                unknowns: sol.unknowns,
                iterations: sol.iterations,
                residual: sol.residual,
                nodes,
            };
            write_json(&out, &o)?;
            Ok(true)
        }
        Command::Smooth { chart, stride, out } => {
            let (_, m, probe) = chart.load()?;
            let (cutoff, calibration) = stages::calibrated(m.dim())?;
            let (scale, field) = stages::smooth_scale(&m, cutoff, chart.i0, stride, chart.margin, &probe)?;
            write_json(&out, &SmoothOutput { calibration, scale, field })?;
            Ok(true)
        }
        Command::Curvature { chart, stride, out } => {
            let (_, m, probe) = chart.load()?;
            let (cutoff, _) = stages::calibrated(m.dim())?;
            let rep = stages::curvature_stage(&m, cutoff, chart.i0, stride, chart.margin, &probe)?;
            write_json(&out, &rep)?;
            let csv_path = out.with_extension("csv");
            let mut w = csv::Writer::from_path(&csv_path).with_context(|| csv_path.display().to_string())?;
            for r in &rep.rows {
                w.serialize(r).with_context(|| csv_path.display().to_string())?;
            }
            w.flush().with_context(|| csv_path.display().to_string())?;
            Ok(true)
        }
        Command::Patch { model, i0, net_stride, margin, out } => {
            let (_, model) = load_torus(&model)?;
            let (cutoff, _) = stages::calibrated(2)?;
            let settings = PatchSettings { net_stride, margin, ..Default::default() };
            let (stage, global) = stages::patch_stage(&model, cutoff, i0, &settings)?;
            write_json(&out, &PatchOutput { stage, global })?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

