//! End-to-end acceptance checks. Prints one line per criterion and fails
//! when any criterion fails. `ACCEPTANCE_ONLY=4,8` runs a subset.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use chartsmooth::formats::load_torus;
use chartsmooth::pipeline::{run_pipeline, PipelineConfig};
use chartsmooth::plot::emit_plot_data;
use chartsmooth::stages::{self, ChartSource, Probe, Resolution};
use chartsmooth_core::cell::{cell_deviation_report, solve_cell, CellOptions, OracleFrame};
use chartsmooth_core::cutoff::{calibrated_cutoff, normalization_integral, RadialPlan};
use chartsmooth_core::domain::{ChartDomain, Node};
use chartsmooth_core::embedding::{EmbeddingKernel, KernelOptions, L2Vector};
use chartsmooth_core::linalg::SmallMat;
use chartsmooth_core::metric::{sample_metric, MetricField, MetricGenerator, PhiTerm};
use chartsmooth_core::norms::Flavor;
use chartsmooth_core::patchwork::{assemble_global_metric, consistency_check, smooth_torus, QuotientModel};
use chartsmooth_core::submanifold::{
    curvature_report, projection_derivative, second_fundamental_form, CurvatureOptions, HessianSource,
    ProjectorFamily,
};
use chartsmooth::formats::MetricSpec;

// tolerances
const C1_REL_ERROR: f64 = 0.01;
const C1_REFINE_RATIO: f64 = 0.5;
const C2_NORMALIZATION: f64 = 0.005;
const C3_ISOMETRY: f64 = 0.02;
const C5_FACTOR: f64 = 2.0;
const C6_PROJECTOR: f64 = 1e-10;
const C6_IDENTITY: f64 = 0.03;
const C6_P2: f64 = 1e-6;
const C7_AGREEMENT: f64 = 0.15;
const C7_FLAT: f64 = 0.05;
const C8_TAMING: f64 = 10.0;
// smoothed sup|K| at the rough-bump tip, pinned from the first run
const C8_PINNED: f64 = 14.947;
const C8_PIN_TOLERANCE: f64 = 0.02;
const C9_EQUIVARIANCE: f64 = 0.01;
const C9_CONSISTENCY: f64 = 0.01;
const C9_FAULT: f64 = 0.04;
const C10_SCALING: f64 = 1e-8;

// resolution
const SWEEP: [f64; 3] = [0.2, 0.1, 0.05];
const SPHERE_STEPS: f64 = 12.0;
const BUMP_STEPS: f64 = 16.0;
const CURVATURE_STEPS: f64 = 24.0;
const PROBE: f64 = 0.08;
const FINE_CURVATURE_STEPS: f64 = 36.0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}

fn domain(radius: f64, spacing: f64) -> ChartDomain {
    ChartDomain::with_spacing(2, radius, spacing).unwrap()
}

fn rough_bump() -> MetricGenerator {
    MetricGenerator::RoughBump { amplitude: 0.2, center: [0.0; 3], exponent: 0.5, width: 0.01 }
}

fn gaussian_bump() -> MetricGenerator {
    MetricGenerator::Conformal {
        terms: vec![PhiTerm::Gaussian { amplitude: 0.3, center: [0.02, -0.01, 0.0], width: 0.2 }],
    }
}

/// Chart for scale `i0` with `steps` grid steps per cell radius.
fn chart_at(gen: MetricGenerator, i0: f64, steps: f64, probe: f64) -> MetricField {
    let spec = MetricSpec::generated(gen, 1.0, 64);
    let src = ChartSource::new(spec.clone(), spec.build().unwrap());
    let res = Resolution { steps_per_radius: Some(steps), margin: 2.0 };
    src.metric_at(i0, &res, &Probe { radius: Some(probe), spacing: None }).unwrap().into_owned()
}

fn kernel(m: &MetricField, i0: f64, margin: f64) -> EmbeddingKernel {
    let opts = KernelOptions { stride: 1, margin, ..Default::default() };
    EmbeddingKernel::new(m, calibrated_cutoff(2).unwrap(), i0, opts).unwrap()
}

// ------------------------------------------------------------------ 1

fn c1_dirichlet_oracle() -> Outcome {
    let i0 = 0.1;
    let errs: Vec<f64> = [12.0, 24.0]
        .iter()
        .map(|steps| {
            let m = sample_metric(&MetricGenerator::Flat, &domain(0.15, i0 / steps)).unwrap();
            let sol = solve_cell(&m, [0, 0, 0], i0, &CellOptions::default()).unwrap();
            cell_deviation_report(&sol, &m, OracleFrame::Chart).rel_value_error
        })
        .collect();
    let ratio = errs[1] / errs[0];
    outcome(
        errs.iter().all(|e| *e <= C1_REL_ERROR) && ratio <= C1_REFINE_RATIO,
        format!("rel error {:.3e} at i0/h=12, {:.3e} at 24 (ratio {ratio:.3}); limits {C1_REL_ERROR}, ratio {C1_REFINE_RATIO}", errs[0], errs[1]),
    )
}

// ------------------------------------------------------------------ 2

fn c2_calibration() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        let c = calibrated_cutoff(n).unwrap();
        // finer than the calibration quadrature
        let v = normalization_integral(n, &c, RadialPlan { order: 8, panels: 32 });
        worst = worst.max((v - 1.0).abs());
    }
    outcome(worst <= C2_NORMALIZATION, format!("max |I - 1| over n=2,3 is {worst:.3e}; limit {C2_NORMALIZATION}"))
}

// ------------------------------------------------------------------ 3

fn c3_flat_isometry() -> Outcome {
    let i0 = 0.1;
    let m = sample_metric(&MetricGenerator::Flat, &domain(0.35, i0 / 12.0)).unwrap();
    let k = kernel(&m, i0, 2.5);
    let mut bank = k.bank(&m).unwrap();
    let mut worst: f64 = 0.0;
    let region = k.eval_region().to_vec();
    for &p in &region {
        let jet = k.jet(&mut bank, p, false).unwrap();
        for j in 0..8 {
            let t = PI * j as f64 / 8.0;
            let dv = jet.directional(&[t.cos(), t.sin()]);
            worst = worst.max((k.inner(&dv, &dv) - 1.0).abs());
        }
    }
    outcome(
        worst <= C3_ISOMETRY,
        format!("sup | |dF v|^2 - |v|^2 | / |v|^2 = {worst:.3e} over {} points x 8 directions; limit {C3_ISOMETRY}", region.len()),
    )
}

// ------------------------------------------------------------------ 4

fn sweep(gen: MetricGenerator, steps: f64) -> (Vec<f64>, bool) {
    let (cutoff, _) = stages::calibrated(2).unwrap();
    let probe = Probe { radius: Some(PROBE), spacing: None };
    let mut eps = Vec::new();
    let mut inside = true;
    for i0 in SWEEP {
        let m = chart_at(gen.clone(), i0, steps, PROBE);
        let (s, _) = stages::smooth_scale(&m, cutoff, i0, 1, 2.0, &probe).unwrap();
        inside &= s.ratio_min >= (-s.eps).exp() * (1.0 - 1e-12) && s.ratio_max <= s.eps.exp() * (1.0 + 1e-12);
        eps.push(s.eps);
    }
    (eps, inside)
}

fn c4_sandwich() -> Outcome {
    let (sphere, a) = sweep(MetricGenerator::Sphere { rho: 1.0 }, SPHERE_STEPS);
    let (bump, b) = sweep(rough_bump(), BUMP_STEPS);
    let dec = |e: &[f64]| e.windows(2).all(|w| w[1] < w[0]);
    outcome(
        a && b && dec(&sphere) && dec(&bump),
        format!("eps over i0 {SWEEP:?}: sphere {sphere:.4?}, rough bump {bump:.4?}; strictly decreasing required"),
    )
}

// ------------------------------------------------------------------ 5, 9

struct TorusRun {
    consistency: f64,
    faulty: f64,
    input: [f64; 2],
    smoothed: [f64; 2],
}

fn torus_run() -> &'static TorusRun {
    static RUN: OnceLock<TorusRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let (_, model): (_, QuotientModel) = load_torus(&configs().join("bumpy_torus.json")).unwrap();
        let flavor = Flavor::parse("c,weak", 0.5).unwrap();
        let q = stages::norm_report(&model.atlas().unwrap(), model.chart_radius, &flavor, 0)
            .unwrap()
            .norm_value
            .unwrap();
        let opts = KernelOptions { stride: 1, margin: 2.0, ..Default::default() };
        let sm = smooth_torus(&model, calibrated_cutoff(2).unwrap(), 0.08, opts, 3, q).unwrap();
        let g = assemble_global_metric(&model, &sm.fields, q, 3).unwrap();
        let consistency = consistency_check(&model, &g, q).unwrap().max_discrepancy;
        let mut bad = sm.fields.clone();
        bad[2].gtilde.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x *= 1.05));
        let g_bad = assemble_global_metric(&model, &bad, q, 3).unwrap();
        let faulty = consistency_check(&model, &g_bad, q).unwrap().max_discrepancy;
        let ni = stages::net_non_inflation(&model, &g, &flavor, 0).unwrap();
        TorusRun {
            consistency,
            faulty,
            input: [ni.input.q_quasi, ni.input.q_deriv],
            smoothed: [ni.smoothed.q_quasi, ni.smoothed.q_deriv],
        }
    })
}

fn c5_non_inflation() -> Outcome {
    let r = torus_run();
    let ok = (0..2).all(|i| r.smoothed[i] <= C5_FACTOR * r.input[i]);
    outcome(
        ok,
        format!(
            "bumpy torus at r=0.4: quasi {:.4} vs input {:.4}, deriv {:.4} vs input {:.4}; limit {C5_FACTOR}x",
            r.smoothed[0], r.input[0], r.smoothed[1], r.input[1]
        ),
    )
}

// ------------------------------------------------------------------ 6

fn c6_projector() -> Outcome {
    let i0 = 0.1;
    let m = sample_metric(&gaussian_bump(), &domain(0.25, i0 / 24.0)).unwrap();
    let k = kernel(&m, i0, 2.0);
    let mut bank = k.bank(&m).unwrap();
    let opts = CurvatureOptions::default();
    let mut laws: f64 = 0.0;
    let mut identity: f64 = 0.0;
    let mut p2: f64 = 0.0;
    for p in [[0, 0, 0], [2, -1, 0]] {
        let fam = ProjectorFamily::build(&k, &mut bank, p, &opts).unwrap();
        let frame = &fam.center;
        let dict = fam.dictionary();
        for z in &dict {
            let pz = frame.project(&k, z);
            let d = L2Vector::combine(&[(1.0, &pz), (-1.0, &frame.project(&k, &pz))]);
            laws = laws.max(k.norm(&d) / k.norm(z));
            for w in &dict {
                let a = k.inner(&pz, w);
                let b = k.inner(z, &frame.project(&k, w));
                laws = laws.max((a - b).abs() / (k.norm(z) * k.norm(w)));
            }
        }
        let axes = [[1.0, 0.0], [0.0, 1.0]];
        for v in axes {
            p2 = p2.max(projection_derivative(&k, &fam, &v).unwrap().p2_residual);
            for w in axes {
                // (d_v P)(d_w F) against (1 - P) ∇²_{v,w} F
                let lhs = fam.d_apply(&k, &v, &fam.jet.directional(&w));
                let rhs = second_fundamental_form(&k, &fam, &v, &w, HessianSource::Lattice);
                let d = L2Vector::combine(&[(1.0, &lhs), (-1.0, &rhs)]);
                identity = identity.max(k.norm(&d) / k.norm(&rhs));
            }
        }
    }
    outcome(
        laws <= C6_PROJECTOR && identity <= C6_IDENTITY && p2 <= C6_P2,
        format!(
            "P^2=P / self-adjoint {laws:.2e} (limit {C6_PROJECTOR:.0e}); dP dF vs (1-P) d2F {identity:.3e} (limit {C6_IDENTITY}); p2 residual {p2:.2e} (limit {C6_P2:.0e})"
        ),
    )
}

// ------------------------------------------------------------------ 7, 8

fn estimates(gen: MetricGenerator, i0: f64, steps: f64, points: &[Node]) -> (Vec<[f64; 3]>, Vec<f64>) {
    let m = chart_at(gen, i0, steps, 0.01);
    let k = kernel(&m, i0, 2.0);
    let mut bank = k.bank(&m).unwrap();
    let rep = curvature_report(&k, &mut bank, points, &CurvatureOptions::default()).unwrap();
    let input = chartsmooth_core::gauss::reference_gauss_curvature(&m).unwrap();
    let d = m.domain();
    let k_in = points.iter().map(|p| input[d.index(*p).unwrap()]).collect();
    let ks = (0..points.len()).map(|i| [rep.k_commutator[i], rep.k_gauss[i], rep.k_direct[i]]).collect();
    (ks, k_in)
}

fn pairwise(k: &[f64; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, b) in [(0, 1), (1, 2), (0, 2)] {
        worst = worst.max((k[a] - k[b]).abs() / k[a].abs().max(k[b].abs()));
    }
    worst
}

fn c7_curvature_agreement() -> Outcome {
    let centre = [[0, 0, 0]];
    let (s1, _) = estimates(MetricGenerator::Sphere { rho: 1.0 }, 0.2, CURVATURE_STEPS, &centre);
    let (s2, _) = estimates(MetricGenerator::Sphere { rho: 2.0 }, 0.05, FINE_CURVATURE_STEPS, &centre);
    let (flat, _) = estimates(MetricGenerator::Flat, 0.1, CURVATURE_STEPS, &[[0, 0, 0], [2, 1, 0]]);
    let a = pairwise(&s1[0]);
    let b = pairwise(&s2[0]);
    let f = flat.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    outcome(
        a <= C7_AGREEMENT && b <= C7_AGREEMENT && f <= C7_FLAT,
        format!(
            "sphere rho=1 i0=0.2 K={:.4?} spread {a:.3}; rho=2 i0=0.05 K={:.4?} spread {b:.3} (limit {C7_AGREEMENT}); flat sup|K| {f:.3e} (limit {C7_FLAT})",
            s1[0], s2[0]
        ),
    )
}

fn c8_taming() -> Outcome {
    let pts: Vec<Node> = (-1..=1).flat_map(|a| (-1..=1).map(move |b| [a, b, 0])).collect();
    let (ks, k_in) = estimates(rough_bump(), 0.1, CURVATURE_STEPS, &pts);
    let smooth = ks.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let input = k_in.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ratio = input / smooth;
    let drift = (smooth - C8_PINNED).abs() / C8_PINNED;
    outcome(
        ratio >= C8_TAMING && drift <= C8_PIN_TOLERANCE,
        format!(
            "rough bump near the tip: input sup|K| {input:.2}, smoothed {smooth:.3} (pinned {C8_PINNED}, drift {drift:.1e}), ratio {ratio:.1}; limit {C8_TAMING}x"
        ),
    )
}

// ------------------------------------------------------------------ 9

fn quarter_turn(x: Node) -> Node {
    [-x[1], x[0], 0]
}

fn c9_equivariance() -> Outcome {
    let i0 = 0.1;
    let m = chart_at(rough_bump(), i0, 12.0, 0.05);
    let k = kernel(&m, i0, 2.0);
    let mut bank = k.bank(&m).unwrap();
    let mut f_err: f64 = 0.0;
    let mut g_err: f64 = 0.0;
    for p in [[4, 1, 0], [-3, 5, 0]] {
        let f = k.embedding_function(&mut bank, p).unwrap();
        let fr = k.embedding_function(&mut bank, quarter_turn(p)).unwrap();
        let peak = f.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for node in f.bbox.nodes() {
            f_err = f_err.max((f.at(node) - fr.at(quarter_turn(node))).abs() / peak);
        }
        let g = k.pullback_metric(&mut bank, &[p, quarter_turn(p)]).unwrap();
        let a = SmallMat::from_packed(2, &g.gtilde[0]);
        let b = SmallMat::from_packed(2, &g.gtilde[1]);
        let expect = [[a.a[1][1], -a.a[0][1]], [-a.a[1][0], a.a[0][0]]];
        for i in 0..2 {
            for j in 0..2 {
                g_err = g_err.max((b.a[i][j] - expect[i][j]).abs() / a.a[0][0]);
            }
        }
    }
    let r = torus_run();
    outcome(
        f_err <= C9_EQUIVARIANCE && g_err <= C9_EQUIVARIANCE && r.consistency <= C9_CONSISTENCY && r.faulty >= C9_FAULT,
        format!(
            "quarter turn: f {f_err:.1e}, g~ {g_err:.1e} (limit {C9_EQUIVARIANCE}); torus consistency {:.2e} (limit {C9_CONSISTENCY}), with 5% fault {:.3} (needs >= {C9_FAULT})",
            r.consistency, r.faulty
        ),
    )
}

// ------------------------------------------------------------------ 10

fn c10_rescaling() -> Outcome {
    let base = sample_metric(&gaussian_bump(), &domain(1.0, 1.0 / 80.0)).unwrap();
    let opts = CellOptions::default();
    let a = solve_cell(&base, [2, 1, 0], 0.16, &opts).unwrap();
    let peak = a.max_value().0;
    let mut worst: f64 = 0.0;
    for lambda in [0.5, 1.3, 2.0] {
        let scaled = base.scaled(lambda * lambda);
        let b = solve_cell(&scaled, [2, 1, 0], 0.16 * lambda, &opts).unwrap();
        for node in a.bbox.nodes().chain(b.bbox.nodes()) {
            let d = (lambda * lambda * a.value_at(node) - b.value_at(node)).abs() / (lambda * lambda * peak);
            worst = worst.max(d);
        }
    }
    outcome(worst <= C10_SCALING, format!("max |l^2 h_g - h_(l^2 g)| / peak over l in 0.5, 1.3, 2 is {worst:.2e}; limit {C10_SCALING:.0e}"))
}

// ------------------------------------------------------------------ 11

fn c11_determinism() -> Outcome {
    let mut cfg = PipelineConfig::load(&configs().join("flat_pipeline.json")).unwrap();
    cfg.torus = Some(configs().join("flat_torus.json"));
    cfg.stages.patch = true;
    cfg.patch.i0 = Some(0.08);
    let dir = std::env::temp_dir().join(format!("chartsmooth-acceptance-{}", std::process::id()));
    let mut texts = Vec::new();
    let mut csvs = Vec::new();
    for run in 0..2 {
        let r = run_pipeline(&cfg).unwrap();
        texts.push(serde_json::to_string_pretty(&r).unwrap());
        let out = dir.join(run.to_string());
        let files = emit_plot_data(&r, &out).unwrap();
        csvs.push(files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>());
    }
    let _ = std::fs::remove_dir_all(&dir);
    let same = texts[0] == texts[1] && csvs[0] == csvs[1];
    outcome(same, format!("two full runs: report {} bytes, {} CSV files; identical: {same}", texts[0].len(), csvs[0].len()))
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "Euclidean Dirichlet oracle", c1_dirichlet_oracle),
        (2, "cutoff calibration", c2_calibration),
        (3, "flat isometry", c3_flat_isometry),
        (4, "quasi-isometry sandwich", c4_sandwich),
        (5, "norm non-inflation", c5_non_inflation),
        (6, "projector laws", c6_projector),
        (7, "curvature triple agreement", c7_curvature_agreement),
        (8, "smoothing tames curvature", c8_taming),
        (9, "equivariance", c9_equivariance),
        (10, "rescaling identity", c10_rescaling),
        (11, "determinism", c11_determinism),
    ];
    // panics are reported on the criterion line
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let start = Instant::now();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let o = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !o.passed {
            failed += 1;
        }
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict} {name}: {} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {failed} failed [{:.1}s]", start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
