use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::time::Instant;

use anyhow::{Context, Result};
use evolute_core::dataset::{self, split, Dataset, ObsLayout};
use evolute_core::expert::generate_dataset;
use evolute_core::manifest::RunManifest;
use evolute_core::nn::write_checkpoint;
use evolute_core::pipeline::{evaluate_policy, train_ebm, train_ff, write_loss_csv};
use evolute_core::policy::{load_bundle, BundleManifest, PolicyKind};
use evolute_core::service::{Server, ServerConfig};
use evolute_core::{metrics, Error};
use log::{info, warn};

use crate::settings::Settings;
use crate::{Cli, Command, Stream};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> evolute_core::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn load_data(paths: &[PathBuf]) -> Result<Dataset> {
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    let (data, warnings) = dataset::load_many(&refs)?;
    for w in warnings {
        warn!("{w}");
    }
    Ok(data)
}

pub fn run(cli: &Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref(), &cli.overrides)?;
    let argv: Vec<String> = std::env::args().collect();
    let started = Instant::now();
    match &cli.command {
        Command::GenData { episodes, seed, out, text } => {
            let mut m = RunManifest::new("gen-data", argv);
            m.config = settings.snapshot().iter().map(|(k, v)| (k.into(), v.into())).collect();
            m.seeds.insert("data".into(), *seed);
            let trajectories = generate_dataset(*episodes, &settings.sim, &settings.expert, *seed)?;
            let data = Dataset { sim_config: settings.sim.clone(), trajectories };
            if *text {
                write_with(out, |w| dataset::write_text(w, &data))?;
            } else {
                dataset::save(out, &data)?;
            }
            info!("wrote {} episodes, {} samples to {}", data.trajectories.len(), data.n_samples(), out.display());
            m.add_output(out)?;
            m.notes.insert("samples".into(), data.n_samples().to_string());
            m.wall_clock_secs = started.elapsed().as_secs_f64();
            m.save(&sibling(out, "manifest.json"))?;
            Ok(())
        }
        Command::Train { stream, data, epochs, seed, out } => train(&settings, argv, *stream, data, *epochs, *seed, out, started),
        Command::Eval { bundle, matches, seed, out, ref_data, jobs } => {
            eval(&settings, argv, bundle, *matches, *seed, out, ref_data, *jobs, started)
        }
        Command::Serve { port, host, record_dir } => serve(&settings, host, *port, record_dir.clone()),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

#[allow(clippy::too_many_arguments)]
fn train(
    settings: &Settings,
    argv: Vec<String>,
    stream: Stream,
    data_paths: &[PathBuf],
    epochs: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    started: Instant,
) -> Result<()> {
    let data = load_data(data_paths)?;
    let layout = data.layout();
    let mut cfg = settings.train.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let ff_epochs = epochs.or(settings.extra.ff_epochs).unwrap_or(cfg.epochs);
    let ebm_epochs = epochs.or(settings.extra.ebm_epochs).unwrap_or(cfg.epochs);
    if ff_epochs == 0 || ebm_epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be >= 1".into()).into());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut m = RunManifest::new("train", argv);
    m.config = settings.snapshot().iter().map(|(k, v)| (k.into(), v.into())).collect();
    m.config.insert("ff_epochs".into(), ff_epochs.to_string());
    m.config.insert("ebm_epochs".into(), ebm_epochs.to_string());
    m.seeds.insert("train".into(), cfg.seed);
    for p in data_paths {
        m.add_input(p)?;
    }
    let (train_set, val_set) = split(data.trajectories, settings.extra.val_fraction, cfg.seed)?;
    info!("training on {} episodes, validating on {}", train_set.len(), val_set.len());

    let ff_path = out.join("ff.ckpt");
    let ebm_path = out.join("ebm.ckpt");
    if matches!(stream, Stream::Ff | Stream::Both) {
        let t = train_ff(&train_set, &val_set, layout, &settings.arch, &cfg, ff_epochs)?;
        write_with(&ff_path, |w| write_checkpoint(w, &t.model.to_checkpoint(Some(&t.optimizer))))?;
        let csv = out.join("ff_losses.csv");
        write_with(&csv, |w| write_loss_csv(w, &t.log))?;
        m.add_output(&ff_path)?;
        m.add_output(&csv)?;
        if let Some(last) = t.log.last() {
            m.notes.insert("ff_final_loss".into(), format!("{:.9}", last.train_loss));
        }
    }
    if matches!(stream, Stream::Ebm | Stream::Both) {
        let t = train_ebm(&train_set, &val_set, layout, &settings.arch, &settings.sampler, &cfg, ebm_epochs)?;
        write_with(&ebm_path, |w| write_checkpoint(w, &t.model.to_checkpoint(Some(&t.optimizer))))?;
        let csv = out.join("ebm_losses.csv");
        write_with(&csv, |w| write_loss_csv(w, &t.log))?;
        m.add_output(&ebm_path)?;
        m.add_output(&csv)?;
        m.notes.insert("ebm_initial_loss".into(), format!("{:.9}", t.initial_loss));
        m.notes.insert("ebm_uniform_loss".into(), format!("{:.9}", ((1 + settings.sampler.n_fake) as f64).ln()));
        if let Some(last) = t.log.last() {
            m.notes.insert("ebm_final_loss".into(), format!("{:.9}", last.train_loss));
        }
    }

    let hash = |p: &Path| evolute_core::hashing::file_sha256(p).map_err(Error::from);
    if ff_path.exists() {
        let b = BundleManifest {
            kind: PolicyKind::FfbcBaseline,
            ff_checkpoint: Some("ff.ckpt".into()),
            ebm_checkpoint: None,
            ff_sha256: Some(hash(&ff_path)?),
            ebm_sha256: None,
            inference: settings.inference.clone(),
            expert: settings.expert.clone(),
        };
        let p = out.join("ffbc.bundle");
        b.save(&p)?;
        m.add_output(&p)?;
        if ebm_path.exists() {
            let b = BundleManifest {
                kind: PolicyKind::Evolute,
                ebm_checkpoint: Some("ebm.ckpt".into()),
                ebm_sha256: Some(hash(&ebm_path)?),
                ..b
            };
            let p = out.join("evolute.bundle");
            b.save(&p)?;
            m.add_output(&p)?;
        }
    }
    m.wall_clock_secs = started.elapsed().as_secs_f64();
    m.save(&out.join("manifest.json"))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    settings: &Settings,
    argv: Vec<String>,
    bundle_path: &Path,
    matches: usize,
    seed: u64,
    out: &Path,
    ref_data: &[PathBuf],
    jobs: usize,
    started: Instant,
) -> Result<()> {
    let bundle = load_bundle(bundle_path).with_context(|| format!("loading bundle {}", bundle_path.display()))?;
    if let Some(layout) = bundle.layout() {
        let expect = ObsLayout::from_sim(&settings.sim);
        if layout.n_rays != expect.n_rays || layout.grid_res != expect.grid_res {
            return Err(Error::Shape(format!(
                "bundle was trained with {} rays / {}x{} grid but the arena produces {} / {}x{}",
                layout.n_rays, layout.grid_res, layout.grid_res, expect.n_rays, expect.grid_res, expect.grid_res
            ))
            .into());
        }
    }
    let reference = if ref_data.is_empty() { None } else { Some(load_data(ref_data)?) };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut m = RunManifest::new("eval", argv);
    m.config = settings.snapshot().iter().map(|(k, v)| (k.into(), v.into())).collect();
    m.seeds.insert("eval".into(), seed);
    m.add_input(bundle_path)?;
    for p in ref_data {
        m.add_input(p)?;
    }

    let (report, _) = evaluate_policy(
        &bundle,
        &settings.sim,
        matches,
        seed,
        jobs,
        settings.extra.density_resolution,
        reference.as_ref().map(|d| d.trajectories.as_slice()),
    )?;
    let stats = out.join("stats.csv");
    write_with(&stats, |w| metrics::write_play_stats_csv(w, &report.stats))?;
    let dcsv = out.join("density.csv");
    write_with(&dcsv, |w| report.density.write_csv(w))?;
    let pgm = out.join("density.pgm");
    write_with(&pgm, |w| report.density.write_pgm(w))?;
    let txt = out.join("report.txt");
    write_with(&txt, |w| report.write(w))?;
    for p in [&stats, &dcsv, &pgm, &txt] {
        m.add_output(p)?;
    }
    if let Some((q, _)) = &report.reference {
        let p = out.join("ref_density.csv");
        write_with(&p, |w| q.write_csv(w))?;
        m.add_output(&p)?;
    }
    let mut text = Vec::new();
    report.write(&mut text)?;
    print!("{}", String::from_utf8_lossy(&text));
    m.wall_clock_secs = started.elapsed().as_secs_f64();
    m.save(&out.join("manifest.json"))?;
    Ok(())
}

fn serve(settings: &Settings, host: &str, port: u16, record_dir: Option<PathBuf>) -> Result<()> {
    if let Some(d) = &record_dir {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let server = Server::bind((host, port), ServerConfig::new(settings.sim.clone(), record_dir))
        .with_context(|| format!("binding {host}:{port}"))?;
    let flag = server.shutdown_handle();
    ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)).context("installing interrupt handler")?;
    println!("listening on {}", server.local_addr()?);
    std::io::stdout().flush()?;
    server.run()?;
    info!("server stopped");
    Ok(())
}
