use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sidelobe::bga::{design_nlfm, evolve, GaConfig, NlfmDesign};
use sidelobe::clean::{clean_pipeline, simulate_profile, threshold_for_pfa, RangeScene};
use sidelobe::filter_design::{
    build_convolution_matrix, compression_metrics, matched_filter, solve_min_isl, CompressionMetrics, ConvolutionMatrix,
    FilterWeights, Provenance,
};
use sidelobe::io::{complex_csv, profile_csv, read_complex_csv, table_csv, to_json, FilterMeta, SceneFile, WaveformMeta};
use sidelobe::rls::{build_desired_response, export_trace, optimize, RlsParams};
use sidelobe::waveform::{barker, generate_lfm, Waveform};
use sidelobe::{Error, C64};

use crate::config::{
    defaults, demo_scene_preset, load_config_file, merge, read_json, resolve, CleanConfig, DesignIslConfig, Manifest,
    MetricsConfig, OptimizeRlsConfig, Overrides, RlsInit, WaveformConfig, WaveformKind,
};
use crate::error::CliError;
use crate::{Cli, Command, WaveformFlags};

/// Output directory that remembers what was written, for the manifest.
struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, &to_json(value)?)
    }

    fn finish<T: Serialize>(mut self, command: &str, seed: Option<u64>, config: &T) -> Result<(), CliError> {
        self.files.push("manifest.json".into());
        let manifest = Manifest {
            tool: "sidelobe".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config: serde_json::to_value(config).map_err(Error::from)?,
            outputs: self.files.clone(),
        };
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, to_json(&manifest)?).map_err(|e| CliError::io(&path, e))
    }
}

fn waveform_overrides(o: &mut Overrides, w: &WaveformFlags) {
    o.set(&["waveform", "kind"], w.waveform)
        .set(&["waveform", "bandwidth"], w.bandwidth)
        .set(&["waveform", "pulse_width"], w.pulse_width)
        .set(&["waveform", "sample_rate"], w.sample_rate)
        .set(&["waveform", "taper_alpha"], w.taper_alpha)
        .set(&["waveform", "barker_length"], w.barker_length)
        .set(&["waveform", "path"], w.waveform_file.clone());
    if w.waveform_file.is_some() && w.waveform.is_none() {
        o.set(&["waveform", "kind"], Some(WaveformKind::File));
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::DesignIsl { .. } => "design-isl",
        Command::OptimizeRls { .. } => "optimize-rls",
        Command::Clean { .. } => "clean",
        Command::DesignNlfm { .. } => "design-nlfm",
        Command::Metrics { .. } => "metrics",
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let name = command_name(&cli.command);
    let mut merged = defaults(name, cli.common.paper_defaults);
    let mut o = Overrides::default();

    match &cli.command {
        Command::DesignIsl { waveform, filter_length, mainlobe_width, alpha } => {
            waveform_overrides(&mut o, waveform);
            o.set(&["filter_length"], *filter_length)
                .set(&["mainlobe_width"], *mainlobe_width)
                .set(&["alpha"], *alpha);
        }
        Command::OptimizeRls { waveform, filter_length, mainlobe_width, iterations, forgetting_factor, regularization, init, shape } => {
            waveform_overrides(&mut o, waveform);
            o.set(&["filter_length"], *filter_length)
                .set(&["mainlobe_width"], *mainlobe_width)
                .set(&["iterations"], *iterations)
                .set(&["forgetting_factor"], *forgetting_factor)
                .set(&["regularization"], *regularization)
                .set(&["init"], *init)
                .set(&["shape"], *shape);
        }
        Command::Clean { waveform, scene, demo_scene, cells, eta, pfa } => {
            if *demo_scene {
                merge(&mut merged, demo_scene_preset());
            }
            waveform_overrides(&mut o, waveform);
            o.set(&["cells"], *cells).set(&["eta"], *eta).set(&["pfa"], *pfa);
            if let Some(path) = scene {
                o.set(&["scene"], Some(read_json(path)?));
            }
        }
        Command::DesignNlfm {
            bandwidth,
            pulse_width,
            sample_rate,
            filter_length,
            mainlobe_width,
            population,
            generations,
            stall_generations,
            truncation,
            mutation_rate,
            no_elitism,
        } => {
            o.set(&["waveform_params", "bandwidth"], *bandwidth)
                .set(&["waveform_params", "pulse_width"], *pulse_width)
                .set(&["waveform_params", "sample_rate"], *sample_rate)
                .set(&["waveform_params", "filter_length"], *filter_length)
                .set(&["waveform_params", "mainlobe_width"], *mainlobe_width)
                .set(&["population_size"], *population)
                .set(&["max_generations"], *generations)
                .set(&["stall_generations"], *stall_generations)
                .set(&["truncation_fraction"], *truncation)
                .set(&["mutation_rate"], *mutation_rate)
                .set(&["seed"], cli.common.seed);
            if *no_elitism {
                o.set(&["elitism"], Some(false));
            }
        }
        Command::Metrics { waveform, filter, mainlobe_width } => {
            waveform_overrides(&mut o, waveform);
            o.set(&["filter"], filter.clone()).set(&["mainlobe_width"], *mainlobe_width);
        }
    }

    let mut seed = cli.common.seed;
    if let Some(path) = &cli.common.config {
        let file = load_config_file(path, name)?;
        merge(&mut merged, file.config);
        seed = seed.or(file.seed);
    }
    merge(&mut merged, o.into_value());
    let out = Out::new(&cli.common.out)?;

    match name {
        "design-isl" => {
            let mut cfg: DesignIslConfig = resolve(&merged)?;
            absolutise(&mut cfg.waveform.path)?;
            cmd_design_isl(&cfg, out)?.finish(name, seed, &cfg)
        }
        "optimize-rls" => {
            let mut cfg: OptimizeRlsConfig = resolve(&merged)?;
            absolutise(&mut cfg.waveform.path)?;
            cmd_optimize_rls(&cfg, out)?.finish(name, seed, &cfg)
        }
        "clean" => {
            let mut cfg: CleanConfig = resolve(&merged)?;
            absolutise(&mut cfg.waveform.path)?;
            if let (Some(scene), Some(s)) = (cfg.scene.as_mut(), seed) {
                scene.seed = s;
            }
            cmd_clean(&cfg, out)?.finish(name, seed, &cfg)
        }
        "design-nlfm" => {
            if merged.get("waveform_params").is_none() {
                return Err(CliError::Config(
                    "pulse parameters missing: pass --bandwidth, --pulse-width and --sample-rate, or --paper-defaults".into(),
                ));
            }
            if let Some(s) = seed {
                merge(&mut merged, json!({ "seed": s }));
            }
            let cfg: GaConfig = resolve(&merged)?;
            cmd_design_nlfm(&cfg, out)?.finish(name, Some(cfg.seed), &cfg)
        }
        "metrics" => {
            let mut cfg: MetricsConfig = resolve(&merged)?;
            absolutise(&mut cfg.waveform.path)?;
            absolutise(&mut cfg.filter)?;
            cmd_metrics(&cfg, out)?.finish(name, seed, &cfg)
        }
        _ => unreachable!(),
    }
}

/// Input paths are recorded absolute so a manifest reruns from anywhere.
fn absolutise(path: &mut Option<PathBuf>) -> Result<(), CliError> {
    if let Some(p) = path {
        *p = std::fs::canonicalize(&*p).map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

fn require(v: Option<f64>, flag: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing --{flag} (or pass --paper-defaults / --config)")))
}

fn build_waveform(cfg: &WaveformConfig) -> Result<Waveform, CliError> {
    Ok(match cfg.kind {
        WaveformKind::Lfm => generate_lfm(
            require(cfg.bandwidth, "bandwidth")?,
            require(cfg.pulse_width, "pulse-width")?,
            require(cfg.sample_rate, "sample-rate")?,
            cfg.taper_alpha,
        )?,
        WaveformKind::Barker => barker(cfg.barker_length)?,
        WaveformKind::Impulse => {
            let fs = cfg.sample_rate.unwrap_or(1.0);
            Waveform::from_samples(vec![C64::new(1.0, 0.0)], fs, cfg.bandwidth.unwrap_or(fs))?
        }
        WaveformKind::File => {
            let path = cfg
                .path
                .as_ref()
                .ok_or_else(|| CliError::Config("--waveform file needs --waveform-file".into()))?;
            let samples = read_table(path)?;
            let fs = cfg.sample_rate.unwrap_or(1.0);
            Waveform::from_samples(samples, fs, cfg.bandwidth.unwrap_or(fs))?
        }
    })
}

fn read_table(path: &Path) -> Result<Vec<C64>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_complex_csv(f).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// `row,re,im,power_db` with power relative to the peak row.
fn response_table(y: &[C64], peak_row: usize) -> String {
    let peak = y[peak_row].norm();
    table_csv(
        &["row", "re", "im", "power_db"],
        y.iter().enumerate().map(|(r, v)| vec![r as f64, v.re, v.im, 20.0 * (v.norm() / peak).log10()]),
    )
}

fn write_filter(out: &mut Out, stem: &str, f: &FilterWeights, m: &CompressionMetrics) -> Result<(), CliError> {
    out.write(&format!("{stem}.csv"), &complex_csv(&f.weights))?;
    out.json(&format!("{stem}.json"), &FilterMeta::new(f, m))
}

fn write_waveform(out: &mut Out, w: &Waveform) -> Result<(), CliError> {
    out.write("waveform.csv", &complex_csv(w.samples()))?;
    out.json("waveform.json", &WaveformMeta::from(w))
}

fn filter_setup(w: &WaveformConfig, filter_length: Option<usize>, width: usize) -> Result<(Waveform, ConvolutionMatrix), CliError> {
    let w = build_waveform(w)?;
    let l = filter_length.unwrap_or(2 * w.len());
    let s = build_convolution_matrix(&w, l)?.with_mainlobe(width)?;
    Ok((w, s))
}

fn cmd_design_isl(cfg: &DesignIslConfig, mut out: Out) -> Result<Out, CliError> {
    let (w, s) = filter_setup(&cfg.waveform, cfg.filter_length, cfg.mainlobe_width)?;
    let alpha = C64::new(cfg.alpha.unwrap_or_else(|| w.energy()), 0.0);
    let mf = matched_filter(&w, Some(s.n_filter()))?;
    let mis = solve_min_isl(&s, alpha)?;
    let mm = compression_metrics(&mf, &s, w.taper())?;
    let mi = compression_metrics(&mis, &s, w.taper())?;

    write_waveform(&mut out, &w)?;
    write_filter(&mut out, "matched", &mf, &mm)?;
    write_filter(&mut out, "min_isl", &mis, &mi)?;
    let ym = s.apply(&mf.weights)?;
    let yi = s.apply(&mis.weights)?;
    out.write("response_matched.csv", &response_table(&ym, s.peak_row()))?;
    out.write("response_min_isl.csv", &response_table(&yi, s.peak_row()))?;
    out.json("metrics.json", &json!({ "matched": mm, "min_isl": mi }))?;

    println!("filter length {}, mainlobe {} rows", s.n_filter(), s.mainlobe_width());
    println!("matched  isl {:>9} dB  psl {:>9} dB  snr loss {:.3} dB", fmt(mm.isl_db), fmt(mm.psl_db), mm.snr_loss_db);
    println!("min-isl  isl {:>9} dB  psl {:>9} dB  snr loss {:.3} dB", fmt(mi.isl_db), fmt(mi.psl_db), mi.snr_loss_db);
    Ok(out)
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        sidelobe::io::fmt_db(v)
    }
}

fn cmd_optimize_rls(cfg: &OptimizeRlsConfig, mut out: Out) -> Result<Out, CliError> {
    let (w, s) = filter_setup(&cfg.waveform, cfg.filter_length, cfg.mainlobe_width)?;
    let peak = C64::new(w.energy(), 0.0);
    let init = match cfg.init {
        RlsInit::Matched => matched_filter(&w, Some(s.n_filter()))?,
        RlsInit::MinIsl => solve_min_isl(&s, peak)?,
    };
    let desired = build_desired_response(s.n_out(), cfg.mainlobe_width, peak, cfg.shape)?;
    let mut params = RlsParams::for_pulse(w.samples(), cfg.iterations);
    params.forgetting_factor = cfg.forgetting_factor;
    if let Some(d) = cfg.regularization {
        params.regularization = d;
    }
    let trace = match optimize(&s, &desired, &init, &params) {
        Ok(t) => t,
        Err(Error::Diverged { iteration, partial }) => {
            if let Some(p) = &partial {
                out.write("trace.csv", &export_trace(p))?;
                eprintln!("partial trace ({} rows) written to {}", p.len(), out.dir.join("trace.csv").display());
            }
            return Err(Error::Diverged { iteration, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let best = &trace.best_weights;
    let m = compression_metrics(best, &s, w.taper())?;
    out.write("trace.csv", &export_trace(&trace))?;
    write_filter(&mut out, "rls_best", best, &m)?;
    out.write("response_rls.csv", &response_table(&s.apply(&best.weights)?, s.peak_row()))?;
    out.json("metrics.json", &m)?;

    println!("initial isl {} dB", fmt(trace.db[0]));
    println!("best iteration {} isl {} dB", trace.best_iteration, fmt(trace.best_db()));
    Ok(out)
}

#[derive(Serialize)]
struct CleanSummary {
    noise_power: f64,
    eta: f64,
    strong: Vec<Value>,
}

fn cmd_clean(cfg: &CleanConfig, mut out: Out) -> Result<Out, CliError> {
    let scene_file: &SceneFile = cfg
        .scene
        .as_ref()
        .ok_or_else(|| CliError::Config("no scene: pass --scene <file.json> or --demo-scene".into()))?;
    let w = build_waveform(&cfg.waveform)?;
    let s = ConvolutionMatrix::new(w.samples(), cfg.cells)?;
    let scene = RangeScene::from_file(scene_file, cfg.cells)?;
    let y = simulate_profile(&s, &scene)?;
    let noise = if scene.noise_power > 0.0 { scene.noise_power } else { cfg.diagonal_loading * w.energy() };
    let eta = match cfg.eta {
        Some(e) => e,
        None => threshold_for_pfa(&s, noise, cfg.pfa)?,
    };
    let r = clean_pipeline(&s, &y, noise, eta)?;

    out.write("profile.csv", &profile_csv(&y))?;
    out.write(
        "detections.csv",
        &table_csv(
            &["cell", "statistic", "threshold", "detected"],
            r.detections
                .iter()
                .map(|d| vec![d.cell as f64, d.statistic, d.threshold, if d.detected { 1.0 } else { 0.0 }]),
        ),
    )?;
    out.write("cleaned.csv", &profile_csv(&r.amplitudes))?;
    let strong = r
        .strong
        .cells
        .iter()
        .zip(&r.strong.amplitudes)
        .map(|(c, a)| json!({ "cell": c, "re": a.re, "im": a.im }))
        .collect();
    out.json("summary.json", &CleanSummary { noise_power: noise, eta, strong })?;

    println!("threshold {eta:.6}, {} strong scatterer(s): {:?}", r.strong.cells.len(), r.strong.cells);
    for c in &scene_file.cells {
        if c.index < cfg.cells {
            let a = r.amplitudes[c.index];
            println!("cell {:>4}: true |a| {:.4}, cleaned |a| {:.4}", c.index, C64::new(c.re, c.im).norm(), a.norm());
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct BestGenome {
    control_weights: Vec<f64>,
    bandwidth: f64,
    #[serde(with = "sidelobe::io::db")]
    isl_db: f64,
    generations: usize,
    stop_reason: sidelobe::bga::StopReason,
}

fn cmd_design_nlfm(cfg: &GaConfig, mut out: Out) -> Result<Out, CliError> {
    let history = evolve(cfg)?;
    let best = history.best;
    let d: NlfmDesign = design_nlfm(&best.genome, &cfg.waveform_params)?;

    out.write("history.csv", &history.to_csv())?;
    out.json(
        "best_genome.json",
        &BestGenome {
            control_weights: best.genome.control_weights.to_vec(),
            bandwidth: best.genome.bandwidth,
            isl_db: best.fitness,
            generations: history.len(),
            stop_reason: history.stop_reason,
        },
    )?;
    let fs = cfg.waveform_params.sample_rate;
    out.write(
        "frequency.csv",
        &table_csv(
            &["sample", "time_s", "frequency_hz"],
            d.frequency.values.iter().enumerate().map(|(k, f)| vec![k as f64, k as f64 / fs, *f]),
        ),
    )?;
    out.write("acf.csv", &response_table(&d.response, d.matrix.peak_row()))?;
    write_waveform(&mut out, &d.waveform)?;
    let m = compression_metrics(&d.filter, &d.matrix, d.waveform.taper())?;
    write_filter(&mut out, "filter", &d.filter, &m)?;

    println!(
        "{} generations ({:?}), best isl {} dB",
        history.len(),
        history.stop_reason,
        fmt(best.fitness)
    );
    Ok(out)
}

fn cmd_metrics(cfg: &MetricsConfig, mut out: Out) -> Result<Out, CliError> {
    let path = cfg.filter.as_ref().ok_or_else(|| CliError::Config("missing --filter <coefficients.csv>".into()))?;
    let taps = read_table(path)?;
    let w = build_waveform(&cfg.waveform)?;
    let s = ConvolutionMatrix::new(w.samples(), taps.len())?.with_mainlobe(cfg.mainlobe_width)?;
    let y = s.apply(&taps)?;
    let f = FilterWeights::new(taps, Provenance::External, y[s.peak_row()])?;
    let m = compression_metrics(&f, &s, w.taper())?;
    out.json("metrics.json", &m)?;
    out.write("response.csv", &response_table(&y, s.peak_row()))?;
    println!("isl {} dB  psl {} dB  snr loss {:.3} dB", fmt(m.isl_db), fmt(m.psl_db), m.snr_loss_db);
    Ok(out)
}
