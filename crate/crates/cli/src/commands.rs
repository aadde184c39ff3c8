use std::fs;
use std::path::Path;

use musefm_core::baselines::{lmmse_detect, ls_estimate, mrt_precode, wmmse_precode, zf_detect, zf_precode};
use musefm_core::channel::snr_to_sigma2;
use musefm_core::datastore::{crc64, generate_dataset, read_dataset, write_dataset, Dataset};
use musefm_core::phytasks::{ber, loc_error, nmse, sum_rate, PilotObservation, PilotSelection};
use musefm_core::profile::{ProfileName, SystemParams};
use musefm_core::scene::{generate_scene, rasterize};
use musefm_core::seed::{scenario_seed, stream_seed, Stream};
use musefm_model::config::parse_key_values;
use musefm_model::postprocess::decode_with_probs;
use musefm_model::training::{config_hash, evaluate, fit, load_model, parse_weights};
use musefm_model::{Model, ModelConfig, TaskId, TaskSamples, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{parse_ebn0_list, parse_snr_grid};
use crate::{CliError, CliResult, Common, Sweep};

/// Header of the per-point result tables written by `baseline` and `eval`.
pub const RESULT_HEADER: [&str; 7] = ["task", "method", "snr_db", "metric", "value", "samples", "config_hash"];

struct Settings {
    params: SystemParams,
    model: ModelConfig,
    train: TrainConfig,
    /// Key/value lines from `--config`, part of every config hash.
    overrides: String,
}

fn hex(bytes: &[u8]) -> String {
    format!("{:016x}", crc64(bytes))
}

fn set_system(p: &mut SystemParams, key: &str, value: &str) -> CliResult<bool> {
    let num = |v: &str| -> CliResult<f64> {
        v.trim().parse().map_err(|_| CliError::Invalid(format!("invalid value '{v}' for {key}")))
    };
    let count = |v: &str| -> CliResult<usize> {
        v.trim().parse().map_err(|_| CliError::Invalid(format!("invalid value '{v}' for {key}")))
    };
    match key {
        "scenarios" => p.scenarios = count(value)?,
        "samples_per_scenario" => p.samples_per_scenario = count(value)?,
        "snr_ce_db" => p.snr_ce_db = num(value)?,
        "snr_loc_db" => p.snr_loc_db = num(value)?,
        "snr_det_db" => p.snr_det_db = num(value)?,
        "snr_pre_db" => p.snr_pre_db = num(value)?,
        "p_max" => p.p_max = num(value)?,
        "ebn0_db" => p.ebn0_db = parse_ebn0_list(value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Resolves profile defaults, the dataset's own parameters and `--config`
/// overrides. A dataset fixes the system parameters.
fn settings(common: &Common, dataset: Option<&Dataset>) -> CliResult<Settings> {
    let stored = dataset.map(|d| d.manifest.params.clone());
    let profile = match (common.profile, &stored) {
        (Some(p), Some(s)) if p != s.profile => {
            return Err(CliError::Invalid(format!("--profile {p} does not match the dataset profile {}", s.profile)));
        }
        (Some(p), _) => p,
        (None, Some(s)) => s.profile,
        (None, None) => ProfileName::Toy,
    };
    let mut params = stored.clone().unwrap_or_else(|| SystemParams::for_profile(profile));
    let mut model = ModelConfig::for_profile(profile).with_system(&params);
    let mut train = TrainConfig::for_profile(profile);
    let mut overrides = String::new();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        for (k, v) in parse_key_values(&text)? {
            let known = train.set(&k, &v)? || model.set(&k, &v)?;
            if !known {
                if !set_system(&mut params, &k, &v)? {
                    return Err(CliError::Invalid(format!("unknown config key '{k}'")));
                }
                if stored.is_some() {
                    return Err(CliError::Invalid(format!("'{k}' is fixed by the dataset")));
                }
            }
            overrides.push_str(&format!("{k} = {v}\n"));
        }
        model = model.with_system(&params);
    }
    train.seed = common.seed;
    train.profile = profile;
    params.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    model.validate()?;
    train.validate()?;
    Ok(Settings { params, model, train, overrides })
}

fn open_dataset(root: &Path) -> CliResult<Dataset> {
    if !root.join("manifest.json").is_file() {
        return Err(CliError::Invalid(format!("no dataset at {}", root.display())));
    }
    Ok(read_dataset(root)?)
}

fn system_text(p: &SystemParams) -> String {
    serde_json::to_string(p).expect("system parameters serialize")
}

pub fn scene_gen(common: &Common, out: &Path, scenarios: Option<usize>) -> CliResult<()> {
    let mut s = settings(common, None)?;
    if let Some(n) = scenarios {
        s.params.scenarios = n;
    }
    if s.params.scenarios == 0 {
        return Err(CliError::Invalid("--scenarios must be positive".into()));
    }
    let hash = hex(format!("scene-gen\n{}\n{}\n{}", common.seed, s.params.scenarios, system_text(&s.params)).as_bytes());
    fs::create_dir_all(out)?;
    let mut scenes = Vec::with_capacity(s.params.scenarios);
    let mut graphs = Vec::with_capacity(s.params.scenarios * s.params.grid * s.params.grid);
    let mut table = csv::Writer::from_path(out.join("scenes.csv"))?;
    table.write_record(["index", "seed", "obstacle_area", "occupied_cells", "config_hash"])?;
    for i in 0..s.params.scenarios {
        let seed = stream_seed(scenario_seed(common.seed, i as u64), Stream::Scene, 0);
        let scene = generate_scene(seed, &s.params.scene)?;
        let graph = rasterize(&scene, s.params.grid);
        table.write_record([
            i.to_string(),
            seed.to_string(),
            format!("{:e}", scene.obstacle_area()),
            graph.ones().to_string(),
            hash.clone(),
        ])?;
        graphs.extend_from_slice(&graph.grid);
        scenes.push(serde_json::json!({ "index": i, "seed": seed, "scene": scene }));
    }
    table.flush()?;
    fs::write(out.join("scenes.u8"), graphs)?;
    let doc = serde_json::json!({ "grid": s.params.grid, "config_hash": hash, "scenes": scenes });
    fs::write(out.join("scenes.json"), serde_json::to_string_pretty(&doc).expect("scenes serialize"))?;
    println!("wrote {} scenes to {}", s.params.scenarios, out.display());
    Ok(())
}

pub fn data_gen(common: &Common, out: &Path, scenarios: Option<usize>, samples: Option<usize>) -> CliResult<()> {
    let mut s = settings(common, None)?;
    if let Some(n) = scenarios {
        s.params.scenarios = n;
    }
    if let Some(n) = samples {
        s.params.samples_per_scenario = n;
    }
    s.params.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    let ds = generate_dataset(&s.params, common.seed, PilotSelection::Even)?;
    write_dataset(out, &ds)?;
    println!(
        "wrote {} scenarios ({} train / {} val / {} test) to {}",
        s.params.scenarios,
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        out.display()
    );
    Ok(())
}

/// Test-split samples of a stored dataset.
fn test_samples(ds: &Dataset) -> CliResult<TaskSamples> {
    Ok(TaskSamples::from_bundles(&ds.test, &ds.manifest.params)?)
}

/// Sweep points per task: E_b/N_0 values for decoding, SNRs otherwise.
fn sweep_points(sweep: &Sweep, task: TaskId, samples: &TaskSamples, params: &SystemParams) -> CliResult<Vec<f64>> {
    if task == TaskId::Dec {
        return match (&sweep.ebn0, &sweep.snr) {
            (Some(list), _) => parse_ebn0_list(list),
            (None, Some(grid)) => parse_snr_grid(grid),
            (None, None) => Ok(params.ebn0_db.clone()),
        };
    }
    match &sweep.snr {
        Some(grid) => parse_snr_grid(grid),
        None => Ok(vec![samples.snr(task)]),
    }
}

/// Samples of `task` observed at `snr`. Stored observations are reused when
/// they already sit at that SNR; decoding samples are always redrawn since
/// the stored ones cycle through several E_b/N_0 values.
fn samples_at(samples: &TaskSamples, task: TaskId, snr: f64, seed: u64) -> CliResult<TaskSamples> {
    if task != TaskId::Dec && samples.snr(task) == snr {
        return Ok(samples.clone());
    }
    Ok(samples.at_snr(task, snr, seed)?)
}

pub fn metric_name(task: TaskId) -> &'static str {
    match task {
        TaskId::Ce | TaskId::Det => "nmse",
        TaskId::Pre => "sum_rate",
        TaskId::Dec => "ber",
        TaskId::Loc => "loc_error",
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn result_row(task: TaskId, method: &str, snr: f64, values: &[f64], hash: &str) -> [String; 7] {
    [
        task.key().to_string(),
        method.to_string(),
        snr.to_string(),
        metric_name(task).to_string(),
        format!("{:e}", mean(values)),
        values.len().to_string(),
        hash.to_string(),
    ]
}

/// Per-sample baseline metrics of every classical method for `task`.
fn baseline_metrics(task: TaskId, s: &TaskSamples, snr: f64, seed: u64) -> CliResult<Vec<(&'static str, Vec<f64>)>> {
    let sigma2 = snr_to_sigma2(snr, 1.0);
    Ok(match task {
        TaskId::Ce => {
            let mut ls = Vec::with_capacity(s.ce.len());
            for c in &s.ce {
                let obs = PilotObservation { y: c.y.clone(), selection: c.selection.clone(), snr_db: snr, user: 0 };
                ls.push(nmse(&ls_estimate(&obs, c.h.nrows())?, &c.h)?);
            }
            vec![("ls", ls)]
        }
        TaskId::Det => {
            let (mut zf, mut lmmse) = (Vec::new(), Vec::new());
            for d in &s.det {
                zf.push(nmse(&zf_detect(&d.h, &d.y)?, &d.x)?);
                lmmse.push(nmse(&lmmse_detect(&d.h, &d.y, sigma2)?, &d.x)?);
            }
            vec![("zf", zf), ("lmmse", lmmse)]
        }
        TaskId::Pre => {
            let (mut zf, mut mrt, mut wmmse) = (Vec::new(), Vec::new(), Vec::new());
            for p in &s.pre {
                zf.push(sum_rate(&p.h_true, &zf_precode(&p.h_noisy, s.p_max)?, p.sigma2)?);
                mrt.push(sum_rate(&p.h_true, &mrt_precode(&p.h_noisy, s.p_max), p.sigma2)?);
                let w = wmmse_precode(&p.h_noisy, s.p_max, p.sigma2, 100, 1e-6)?.v;
                wmmse.push(sum_rate(&p.h_true, &w, p.sigma2)?);
            }
            vec![("zf", zf), ("mrt", mrt), ("wmmse", wmmse)]
        }
        TaskId::Dec => {
            let mut hard = Vec::with_capacity(s.dec.len());
            for d in &s.dec {
                let bits = decode_with_probs(vec![0.0; d.s_hat.len()], &d.s_hat, &s.code)?.bits;
                hard.push(ber(&bits, &d.b)?);
            }
            vec![("hard_decision", hard)]
        }
        TaskId::Loc => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let random = s.loc.iter().map(|l| loc_error([rng.gen(), rng.gen()], l.pos)).collect();
            let center = s.loc.iter().map(|l| loc_error([0.5, 0.5], l.pos)).collect();
            vec![("random_guess", random), ("center", center)]
        }
    })
}

pub fn baseline(common: &Common, out: &Path, sweep: &Sweep, dataset: Option<&Path>, scenarios: Option<usize>) -> CliResult<()> {
    let tasks = sweep.tasks()?;
    let ds = match dataset {
        Some(root) => open_dataset(root)?,
        None => {
            let mut s = settings(common, None)?;
            if let Some(n) = scenarios {
                s.params.scenarios = n;
            }
            s.params.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
            generate_dataset(&s.params, common.seed, PilotSelection::Even)?
        }
    };
    let s = settings(common, Some(&ds))?;
    let samples = test_samples(&ds)?;
    let hash = hex(
        format!("baseline\n{}\n{}\n{}\n{}", common.seed, ds.manifest.master_seed, system_text(&s.params), s.overrides).as_bytes(),
    );
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("baseline.csv"))?;
    w.write_record(RESULT_HEADER)?;
    for task in tasks {
        for snr in sweep_points(sweep, task, &samples, &s.params)? {
            let at = samples_at(&samples, task, snr, common.seed)?;
            for (method, values) in baseline_metrics(task, &at, snr, common.seed)? {
                w.write_record(result_row(task, method, snr, &values, &hash))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn train(common: &Common, out: &Path, dataset: &Path, epochs: Option<usize>, alpha: Option<&str>) -> CliResult<()> {
    let ds = open_dataset(dataset)?;
    let mut s = settings(common, Some(&ds))?;
    if let Some(e) = epochs {
        s.train.epochs = e;
    }
    if let Some(a) = alpha {
        s.train.alpha = parse_weights(a)?;
    }
    s.train.validate()?;
    let params = &ds.manifest.params;
    let train = TaskSamples::from_bundles(&ds.train, params)?;
    let val = TaskSamples::from_bundles(&ds.val, params)?;
    let model = Model::new(s.model.clone(), s.train.seed)?;
    let outcome = fit(&model, &train, &val, &s.train, Some(out), |e| {
        eprintln!("epoch {:>4}  lr {:.3e}  train {:.5}  val {:.5}", e.epoch, e.lr, e.train_total, e.val_total);
    })?;
    println!(
        "best validation loss {:.6} at epoch {}; checkpoint in {}",
        outcome.best_val,
        outcome.best_epoch,
        out.join("checkpoint").display()
    );
    Ok(())
}

pub fn eval(common: &Common, out: &Path, sweep: &Sweep, dataset: &Path, checkpoint: Option<&Path>, empty_scenes: bool) -> CliResult<()> {
    let tasks = sweep.tasks()?;
    let ds = open_dataset(dataset)?;
    let s = settings(common, Some(&ds))?;
    let model = match checkpoint {
        Some(dir) => {
            if !dir.join("config.txt").is_file() {
                return Err(CliError::Invalid(format!("no checkpoint at {}", dir.display())));
            }
            load_model(dir)?
        }
        None => Model::new(s.model.clone(), common.seed)?,
    };
    let cfg = model.config();
    if cfg.clone().with_system(&ds.manifest.params) != *cfg {
        return Err(CliError::Invalid("checkpoint dimensions do not match the dataset".into()));
    }
    let mut samples = test_samples(&ds)?;
    if empty_scenes {
        samples = samples.with_empty_scenes();
    }
    let method = if empty_scenes { "model_empty_scenes" } else { "model" };
    let hash = hex(
        format!(
            "eval\n{}\n{}\n{}\n{}\n{}\n{}",
            common.seed,
            ds.manifest.master_seed,
            cfg.to_text(),
            config_hash(cfg, &s.train),
            checkpoint.map(|c| c.display().to_string()).unwrap_or_default(),
            empty_scenes
        )
        .as_bytes(),
    );
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("eval.csv"))?;
    w.write_record(RESULT_HEADER)?;
    let mut cdf: Option<csv::Writer<fs::File>> = None;
    for task in tasks {
        for snr in sweep_points(sweep, task, &samples, &ds.manifest.params)? {
            let at = samples_at(&samples, task, snr, common.seed)?;
            let values = evaluate(&model, &at, task, 100)?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Runtime(format!("non-finite {task} metric at {snr} dB")));
            }
            w.write_record(result_row(task, method, snr, &values, &hash))?;
            if task == TaskId::Loc {
                let c = match cdf.as_mut() {
                    Some(c) => c,
                    None => {
                        let mut c = csv::Writer::from_path(out.join("loc_cdf.csv"))?;
                        c.write_record(["method", "snr_db", "error", "cdf", "config_hash"])?;
                        cdf.insert(c)
                    }
                };
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                let n = sorted.len() as f64;
                for (i, e) in sorted.iter().enumerate() {
                    c.write_record([method.to_string(), snr.to_string(), format!("{e:e}"), format!("{:e}", (i + 1) as f64 / n), hash.clone()])?;
                }
            }
        }
    }
    w.flush()?;
    if let Some(mut c) = cdf {
        c.flush()?;
    }
    Ok(())
}
