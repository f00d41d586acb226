use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::aggregate::{explain_split, label_global, overall_global, ExplainOptions, Weighting};
use crate::error::{Error, Result};
use crate::gradcam::{ExplanationMap, Provenance};
use crate::model::{
    load_checkpoint, save_checkpoint, train, ArchitectureDescriptor, ModelParams, Precision,
    Scalar, TrainConfig,
};
use crate::peppr::{run_peppr, write_curves_csv, Fill, PepprConfig};
use crate::report::{
    file_inventory, read_image, read_meta, render_decile_bands, render_heatmap, summarize_run,
    write_image, write_meta,
};
use crate::synthdata::generate_dataset;
use crate::synthdata::{load_dataset, mean_image, save_dataset, Dataset, Split, SynthConfig};

#[derive(Debug, Serialize, Deserialize)]
struct DatasetInfo {
    seed: u64,
    config: SynthConfig,
}

fn require(dir: &Path, rel: &str) -> Result<PathBuf> {
    let p = dir.join(rel);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::Prerequisite(format!("{} not found", p.display())))
    }
}

/// Removes and recreates a stage's own directory so no stale file survives.
fn fresh_dir(p: &Path) -> Result<()> {
    if p.exists() {
        fs::remove_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::io(p, e))
}

fn write_inventory(stage_dir: &Path) -> Result<()> {
    let mut text = String::new();
    for (name, size, hash) in file_inventory(stage_dir, &["files.txt"])? {
        text.push_str(&format!("{name} {size} {hash:016x}\n"));
    }
    write_text(&stage_dir.join("files.txt"), &text)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Parse {
        path: path.display().to_string(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

pub(crate) fn synth_config(c: &RunConfig) -> Result<SynthConfig> {
    let mut cfg = SynthConfig {
        height: c.image_size.0,
        width: c.image_size.1,
        n_subjects: c.subjects,
        ..SynthConfig::default()
    };
    for name in &c.labels {
        if !cfg.labels.iter().any(|l| &l.name == name) {
            return Err(Error::Config(format!(
                "unknown label {name:?}; known: {}",
                cfg.label_names().join(",")
            )));
        }
    }
    cfg.labels.retain(|l| c.labels.contains(&l.name));
    if cfg.labels.len() != c.labels.len() {
        return Err(Error::Config("duplicate label in --labels".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub(crate) fn train_config(c: &RunConfig) -> TrainConfig {
    TrainConfig {
        learning_rate: c.lr,
        l2_lambda: c.l2,
        batch_size: c.batch_size,
        epochs: c.epochs,
        erasing_prob: c.erasing_prob,
        seed: c.seed,
        flip: c.flip(),
        ..TrainConfig::default()
    }
}

fn read_dataset_info(dir: &Path) -> Result<DatasetInfo> {
    let p = require(dir, "data/dataset.json")?;
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: p.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn read_data(dir: &Path) -> Result<(DatasetInfo, Dataset)> {
    require(dir, "data/manifest.csv")?;
    let info = read_dataset_info(dir)?;
    let ds = load_dataset(&dir.join("data"))?;
    if ds.manifest.n_labels() != info.config.n_labels() {
        return Err(Error::Contract(
            "manifest and dataset.json disagree on labels".into(),
        ));
    }
    Ok((info, ds))
}

pub fn run_generate(c: &RunConfig) -> Result<()> {
    let cfg = synth_config(c)?;
    let dir = c.out.join("data");
    let ds = generate_dataset(&cfg, c.seed)?;
    fresh_dir(&dir)?;
    save_dataset(&ds, &dir)?;
    let info = DatasetInfo {
        seed: c.seed,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&info).expect("config serializes");
    write_text(&dir.join("dataset.json"), &(json + "\n"))?;
    write_inventory(&dir)
}

fn train_with<T: Scalar>(
    ds: &Dataset,
    arch: &ArchitectureDescriptor,
    tc: &TrainConfig,
    dir: &Path,
    names: &[String],
) -> Result<()> {
    let out = train::<T>(ds, arch, tc)?;
    save_checkpoint(&out.params, &dir.join("model.axm"))?;
    let mut csv = String::from("epoch,train_loss,val_loss");
    for n in names {
        csv.push_str(&format!(",val_auc_{n}"));
    }
    csv.push('\n');
    for h in &out.history {
        csv.push_str(&format!("{},{},{}", h.epoch, h.train_loss, h.val_loss));
        for a in &h.val_auc {
            csv.push_str(&format!(",{a}"));
        }
        csv.push('\n');
    }
    write_text(&dir.join("history.csv"), &csv)
}

pub fn run_train(c: &RunConfig) -> Result<()> {
    let (info, ds) = read_data(&c.out)?;
    let tc = train_config(c);
    tc.validate()?;
    let cfg = &info.config;
    let arch =
        ArchitectureDescriptor::default_for(cfg.height, cfg.width, cfg.channels, cfg.n_labels());
    let dir = c.out.join("train");
    fresh_dir(&dir)?;
    let names = cfg.label_names();
    match c.precision() {
        Precision::F32 => train_with::<f32>(&ds, &arch, &tc, &dir, &names)?,
        Precision::F64 => train_with::<f64>(&ds, &arch, &tc, &dir, &names)?,
    }
    let meta = serde_json::json!({
        "architecture": arch.to_string(),
        "labels": names,
        "learning_rate": tc.learning_rate,
        "adam_beta1": tc.adam_beta1,
        "adam_beta2": tc.adam_beta2,
        "l2_lambda": tc.l2_lambda,
        "batch_size": tc.batch_size,
        "epochs": tc.epochs,
        "erasing_prob": tc.erasing_prob,
        "erasing_area": tc.erasing_area,
        "erasing_aspect": tc.erasing_aspect,
        "seed": tc.seed,
        "flip": tc.flip,
        "precision": match c.precision() { Precision::F32 => "f32", Precision::F64 => "f64" },
    });
    let json = serde_json::to_string_pretty(&meta).expect("json");
    write_text(&dir.join("train.json"), &(json + "\n"))?;
    write_inventory(&dir)
}

fn load_model(dir: &Path) -> Result<ModelParams<f32>> {
    load_checkpoint(&require(dir, "train/model.axm")?)
}

fn explain_with<T: Scalar>(
    params: &ModelParams<T>,
    ds: &Dataset,
    c: &RunConfig,
    dir: &Path,
    names: &[String],
) -> Result<()> {
    let opts = ExplainOptions {
        normalization: c.normalization(),
        // Weighting is applied by the aggregate stage from the stored probabilities.
        weighting: Weighting::Uniform,
        flip: c.flip(),
    };
    let split = c.split();
    let ex = explain_split(params, ds, split, &opts)?;
    let maps = dir.join("maps");
    fs::create_dir_all(&maps).map_err(|e| Error::io(&maps, e))?;
    let index = dir.join("index.csv");
    let mut w = csv::Writer::from_path(&index).map_err(csv_err(&index))?;
    w.write_record(["sample_id", "label", "prob", "map_path"])
        .map_err(csv_err(&index))?;
    for s in &ex.samples {
        let id = &ds.manifest.records[s.record].sample_id;
        let rel = format!("maps/{id}_{}.axf", names[s.label]);
        write_image(&s.map.to_image(), &dir.join(&rel))?;
        w.write_record([
            id.as_str(),
            names[s.label].as_str(),
            &s.prob.to_string(),
            &rel,
        ])
        .map_err(csv_err(&index))?;
    }
    w.flush().map_err(|e| Error::io(&index, e))?;
    write_meta(
        &dir.join("explain.meta"),
        &[
            ("split", split.to_string()),
            ("normalization", c.normalization().token().to_string()),
            ("flip", c.flip().to_string()),
            ("n_maps", ex.samples.len().to_string()),
        ],
    )
}

pub fn run_explain(c: &RunConfig) -> Result<()> {
    let params = load_model(&c.out)?;
    let (info, ds) = read_data(&c.out)?;
    let names = info.config.label_names();
    let dir = c.out.join("explain");
    fresh_dir(&dir)?;
    match c.precision() {
        Precision::F32 => explain_with(&params, &ds, c, &dir, &names)?,
        Precision::F64 => explain_with(&params.cast::<f64>(), &ds, c, &dir, &names)?,
    }
    write_inventory(&dir)
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    sample_id: String,
    label: String,
    prob: f64,
    map_path: String,
}

pub fn run_aggregate(c: &RunConfig) -> Result<()> {
    let index = require(&c.out, "explain/index.csv")?;
    let info = read_dataset_info(&c.out)?;
    let names = info.config.label_names();
    let mut rdr = csv::Reader::from_path(&index).map_err(csv_err(&index))?;
    let rows: Vec<IndexRow> = rdr
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err(&index))?;
    let src = c.out.join("explain");
    let dir = c.out.join("aggregate");
    fresh_dir(&dir)?;
    let mut labels = Vec::with_capacity(names.len());
    for (l, name) in names.iter().enumerate() {
        let mut maps = Vec::new();
        let mut weights = Vec::new();
        for r in rows.iter().filter(|r| &r.label == name) {
            let img = read_image(&src.join(&r.map_path))?;
            let prov = Provenance::Sample {
                sample_id: r.sample_id.clone(),
                label: l,
            };
            let mut m = ExplanationMap::from_image(&img, prov)?;
            m.normalization = c.normalization();
            maps.push(m);
            weights.push(match c.weighting() {
                Weighting::Prob => r.prob,
                Weighting::Uniform => 1.0,
            });
        }
        let g = label_global(&maps, &weights, l).map_err(|e| match e {
            Error::EmptyInput(_) => {
                Error::EmptyInput(format!("no explained positives for label {name}"))
            }
            other => other,
        })?;
        write_image(&g.map.to_image(), &dir.join(format!("label_{name}.axf")))?;
        write_meta(
            &dir.join(format!("label_{name}.meta")),
            &[
                ("label", name.clone()),
                ("n_positives", g.n_positives.to_string()),
                ("weight_sum", g.weight_sum.to_string()),
                ("weighting", c.weighting().token().to_string()),
            ],
        )?;
        labels.push(g);
    }
    let overall = overall_global(&labels)?;
    write_image(&overall.map.to_image(), &dir.join("overall.axf"))?;
    write_meta(
        &dir.join("overall.meta"),
        &[
            ("n_labels", overall.n_labels.to_string()),
            ("labels", names.join(",")),
        ],
    )?;
    write_inventory(&dir)
}

pub fn run_peppr_stage(c: &RunConfig) -> Result<()> {
    let overall_path = require(&c.out, "aggregate/overall.axf")?;
    let params = load_model(&c.out)?;
    let (info, ds) = read_data(&c.out)?;
    let overall = ExplanationMap::from_image(&read_image(&overall_path)?, Provenance::Overall)?;
    let flip = c.flip();
    let train_mean = match c.fill() {
        Fill::TrainMean => Some(mean_image(&ds, Split::Train, flip)?),
        Fill::RandomNoise => None,
    };
    let pc = PepprConfig {
        step: c.peppr_step,
        fill: c.fill(),
        seed: c.seed,
        flip,
        noise: c.peppr_noise(),
    };
    let test = ds.manifest.indices(Split::Test);
    let result = match c.precision() {
        Precision::F32 => run_peppr(&params, &ds, &test, &overall, train_mean.as_ref(), &pc)?,
        Precision::F64 => run_peppr(
            &params.cast::<f64>(),
            &ds,
            &test,
            &overall,
            train_mean.as_ref(),
            &pc,
        )?,
    };
    let dir = c.out.join("peppr");
    fresh_dir(&dir)?;
    let mut buf = Vec::new();
    write_curves_csv(&result, &info.config.label_names(), &mut buf)?;
    let p = dir.join("curves.csv");
    fs::write(&p, buf).map_err(|e| Error::io(&p, e))?;
    write_meta(
        &dir.join("peppr.meta"),
        &[
            ("split", Split::Test.to_string()),
            ("step", c.peppr_step.to_string()),
            ("fill", c.fill().token().to_string()),
            ("noise", c.peppr_noise().token().to_string()),
            ("seed", c.seed.to_string()),
        ],
    )?;
    write_inventory(&dir)
}

pub fn run_report(c: &RunConfig) -> Result<()> {
    let summary = summarize_run(&c.out)?;
    let (info, ds) = read_data(&c.out)?;
    let dir = c.out.join("report");
    fresh_dir(&dir)?;
    write_text(&dir.join("summary.txt"), &summary)?;

    let aligned = mean_image(&ds, Split::Val, true)?;
    write_image(&aligned, &dir.join("mean_val_flipped.pgm"))?;
    write_image(
        &mean_image(&ds, Split::Val, false)?,
        &dir.join("mean_val_unflipped.pgm"),
    )?;
    let bg = if c.flip() {
        aligned
    } else {
        mean_image(&ds, Split::Val, false)?
    };

    let agg = c.out.join("aggregate");
    let mut maps: Vec<(String, ExplanationMap)> = Vec::new();
    for (l, name) in info.config.label_names().into_iter().enumerate() {
        let p = require(&c.out, &format!("aggregate/label_{name}.axf"))?;
        read_meta(&agg.join(format!("label_{name}.meta")))?;
        let m = ExplanationMap::from_image(&read_image(&p)?, Provenance::LabelGlobal { label: l })?;
        maps.push((format!("label_{name}"), m));
    }
    let overall = read_image(&agg.join("overall.axf"))?;
    maps.push((
        "overall".into(),
        ExplanationMap::from_image(&overall, Provenance::Overall)?,
    ));
    for (stem, m) in &maps {
        write_image(&render_heatmap(m), &dir.join(format!("{stem}_heat.pgm")))?;
        let bands = render_decile_bands(m, Some(&bg));
        write_image(&bands.to_image(), &dir.join(format!("{stem}_bands.pgm")))?;
    }
    write_inventory(&dir)
}

pub fn run_all(c: &RunConfig) -> Result<()> {
    run_generate(c)?;
    run_train(c)?;
    run_explain(c)?;
    run_aggregate(c)?;
    run_peppr_stage(c)?;
    run_report(c)
}
