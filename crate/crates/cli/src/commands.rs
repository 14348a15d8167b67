use std::collections::HashSet;
use std::path::Path;

use detkit_core::assignment::{
    assign_one_to_many, assign_one_to_one, consistency_check, AssignmentParams, AssignmentResult,
};
use detkit_core::blocks::weights_io::manifest_path_for;
use detkit_core::blocks::WeightStore;
use detkit_core::dataset::{
    class_distribution, default_class_names, label_ids, parse_classes, parse_instance_file, serialize_labels, split_dataset,
    ClassDistribution, DatasetIndex, LabelKind, LabelRecord, SplitMode, SplitSpec,
};
use detkit_core::metrics::{curve_export, evaluate, CurveFormat, EvalConfig, EvalReport, ImageRecord, Interpolation};
use detkit_core::postprocess::{decode_nms_free, nms_greedy_with, DecodeConfig, NmsMode};
use detkit_core::rank::{conv_layers, redundancy_ranking};
use detkit_core::{Error, Result};
use serde::Serialize;

use crate::args::*;
use crate::output::{emit, read_text, require_dir, require_file, require_output_parent, to_json, write_atomic};

pub const STATS_SCHEMA_VERSION: u32 = 1;

pub fn execute(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| Error::invalid("--workers", e.to_string()))?;
    log::debug!("using {} worker threads", pool.current_num_threads());
    pool.install(|| match &cli.command {
        Command::Evaluate(a) => run_evaluate(a),
        Command::DatasetStats(a) => run_dataset_stats(a),
        Command::Split(a) => run_split(a),
        Command::Decode(a) => run_decode(a),
        Command::AssignDemo(a) => run_assign(a),
        Command::RankAnalyze(a) => run_rank(a),
        Command::Curves(a) => run_curves(a),
    })
}

fn load_classes(path: Option<&Path>) -> Result<Vec<String>> {
    match path {
        Some(p) => parse_classes(&read_text(p)?, &p.display().to_string()),
        None => Ok(default_class_names()),
    }
}

fn resolve_class(spec: &str, names: &[String]) -> Result<usize> {
    if let Some(i) = names.iter().position(|n| n == spec) {
        return Ok(i);
    }
    match spec.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => Err(Error::invalid("--sensitivity-class", format!("{spec:?} is neither a class name nor an id"))),
    }
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    require_dir(&a.gt)?;
    require_dir(&a.pred)?;
    if let Some(c) = &a.classes {
        require_file(c)?;
    }
    if let Some(o) = &a.out {
        require_output_parent(o)?;
    }
    let names = load_classes(a.classes.as_deref())?;
    let mut cfg = EvalConfig {
        interpolation: match a.interpolation {
            InterpolationArg::RecallPoints => Interpolation::RecallPoints(a.recall_points),
            InterpolationArg::AllPoints => Interpolation::AllPoints,
        },
        fixed_confidence: a.fixed_confidence,
        sensitivity_class: match &a.sensitivity_class {
            Some(s) => Some(resolve_class(s, &names)?),
            None => names.iter().position(|n| n == "fracture"),
        },
        ..EvalConfig::default()
    };
    if let Some(t) = &a.iou_thresholds {
        cfg.iou_thresholds = t.clone();
    }
    cfg.validate()?;

    let gt = DatasetIndex::load_dir(&a.gt, names.clone(), LabelKind::GroundTruth)?;
    let pred = DatasetIndex::load_dir(&a.pred, names.clone(), LabelKind::Prediction)?;
    let known: HashSet<&str> = gt.images.iter().map(|i| i.id.as_str()).collect();
    if let Some(extra) = pred.images.iter().find(|i| !known.contains(i.id.as_str())) {
        return Err(Error::invalid(
            a.pred.join(format!("{}.txt", extra.id)).display().to_string(),
            "prediction file has no ground-truth counterpart",
        ));
    }
    let mut images = Vec::with_capacity(gt.images.len());
    for img in &gt.images {
        let preds = match pred.get(&img.id) {
            Some(p) => p.records.iter().map(LabelRecord::to_detection).collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let gts = img.records.iter().map(LabelRecord::to_gt).collect::<Result<Vec<_>>>()?;
        images.push(ImageRecord {
            id: img.id.clone(),
            preds,
            gts,
        });
    }
    log::info!("evaluating {} images over {} classes", images.len(), names.len());
    let report = evaluate(&images, &names, &cfg)?;
    log::info!("mAP@50 {:.4}  mAP@50-95 {:.4}  best F1 {:.4}", report.map50, report.map50_95, report.best_f1);
    emit(a.out.as_deref(), &to_json(&report)?)
}

#[derive(Serialize)]
struct StatsReport {
    schema_version: u32,
    #[serde(flatten)]
    distribution: ClassDistribution,
}

fn stats_text(d: &ClassDistribution) -> String {
    let mut s = format!("images\t{}\ninstances\t{}\n", d.total_images, d.total_instances);
    s.push_str("class\timages_containing\tinstances\tratio_percent\n");
    for c in &d.classes {
        s.push_str(&format!("{}\t{}\t{}\t{:.1}\n", c.name, c.images_containing, c.instances, c.ratio_percent));
    }
    s
}

fn run_dataset_stats(a: &DatasetStatsArgs) -> Result<()> {
    require_dir(&a.labels)?;
    if let Some(o) = &a.out {
        require_output_parent(o)?;
    }
    let names = load_classes(a.classes.as_deref())?;
    let index = DatasetIndex::load_dir(&a.labels, names, LabelKind::GroundTruth)?;
    let distribution = class_distribution(&index);
    let text = match a.format {
        StatsFormat::Json => to_json(&StatsReport {
            schema_version: STATS_SCHEMA_VERSION,
            distribution,
        })?,
        StatsFormat::Text => stats_text(&distribution),
    };
    emit(a.out.as_deref(), &text)
}

fn run_split(a: &SplitArgs) -> Result<()> {
    let ids: Vec<String> = match (&a.labels, &a.ids) {
        (Some(dir), None) => {
            require_dir(dir)?;
            label_ids(dir)?
        }
        (None, Some(file)) => read_text(file)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        _ => return Err(Error::invalid("split", "give exactly one of --labels or --ids")),
    };
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let spec = SplitSpec {
        ratios: [a.ratios[0], a.ratios[1], a.ratios[2]],
        seed: a.seed,
        mode: if a.patient_level { SplitMode::Patient } else { SplitMode::Image },
    };
    let split = split_dataset(&ids, &spec)?;
    for (name, part) in [("train.txt", &split.train), ("val.txt", &split.val), ("test.txt", &split.test)] {
        let mut body = part.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        write_atomic(&a.out_dir.join(name), body.as_bytes())?;
    }
    log::info!("split {} ids into {}/{}/{}", ids.len(), split.train.len(), split.val.len(), split.test.len());
    Ok(())
}

fn run_decode(a: &DecodeArgs) -> Result<()> {
    let manifest = a.manifest.clone().unwrap_or_else(|| manifest_path_for(&a.maps));
    require_file(&a.maps)?;
    require_file(&manifest)?;
    if let Some(o) = &a.out {
        require_output_parent(o)?;
    }
    let cfg = DecodeConfig {
        confidence_threshold: a.conf,
        max_detections: a.max_det,
        nms_iou_threshold: a.nms.unwrap_or(DecodeConfig::default().nms_iou_threshold),
        apply_sigmoid: a.sigmoid,
    };
    cfg.validate()?;
    let store = WeightStore::read(&a.maps, &manifest)?;
    let cls = store.require(&a.cls_tensor)?;
    let boxes = store.require(&a.box_tensor)?;
    let dets = match a.nms {
        None => decode_nms_free(cls, boxes, &cfg)?,
        Some(_) => {
            let (_, h, w) = cls.dims3()?;
            let all = decode_nms_free(cls, boxes, &DecodeConfig { max_detections: h * w, ..cfg })?;
            let mode = if a.class_agnostic { NmsMode::ClassAgnostic } else { NmsMode::ClassAware };
            let mut kept = nms_greedy_with(&all, cfg.nms_iou_threshold, mode);
            kept.truncate(cfg.max_detections);
            kept
        }
    };
    log::info!("decoded {} detections", dets.len());
    let records: Vec<LabelRecord> = dets.iter().map(LabelRecord::from_detection).collect();
    emit(a.out.as_deref(), &serialize_labels(&records))
}

fn match_lines(tag: &str, r: &AssignmentResult) -> String {
    r.matches
        .iter()
        .map(|m| format!("{tag} {} {} {}\n", m.gt, m.pred, m.score))
        .collect()
}

fn run_assign(a: &AssignArgs) -> Result<()> {
    require_file(&a.instances)?;
    if let Some(o) = &a.out {
        require_output_parent(o)?;
    }
    let params = AssignmentParams {
        alpha: a.alpha,
        beta: a.beta,
        topk: a.topk,
    };
    params.validate()?;
    let inst = parse_instance_file(&read_text(&a.instances)?, &a.instances.display().to_string())?;
    let mut out = format!("# alpha={} beta={} topk={}\nmode gt pred score\n", params.alpha, params.beta, params.topk);
    let o2m = assign_one_to_many(&inst.gts, &inst.preds, &params)?;
    let o2o = assign_one_to_one(&inst.gts, &inst.preds, &params)?;
    if a.mode != AssignModeArg::OneToOne {
        out.push_str(&match_lines("one_to_many", &o2m));
    }
    if a.mode != AssignModeArg::OneToMany {
        out.push_str(&match_lines("one_to_one", &o2o));
    }
    let check = consistency_check(&o2m, &o2o)?;
    out.push_str(&format!(
        "# consistent={} violations={}\n",
        check.consistent,
        check.violations.len()
    ));
    emit(a.out.as_deref(), &out)
}

fn run_rank(a: &RankArgs) -> Result<()> {
    let manifest = a.manifest.clone().unwrap_or_else(|| manifest_path_for(&a.weights));
    require_file(&a.weights)?;
    require_file(&manifest)?;
    for p in a.json.iter().chain(&a.text) {
        require_output_parent(p)?;
    }
    let store = WeightStore::read(&a.weights, &manifest)?;
    let layers = conv_layers(&store);
    log::info!("{} of {} tensors are 4-D filters", layers.len(), store.len());
    let report = redundancy_ranking(&layers, a.lambda_frac)?;
    if let Some(p) = &a.json {
        write_atomic(p, to_json(&report)?.as_bytes())?;
    }
    if a.text.is_some() || a.json.is_none() {
        emit(a.text.as_deref(), &report.to_text())?;
    }
    Ok(())
}

fn run_curves(a: &CurvesArgs) -> Result<()> {
    require_file(&a.report)?;
    let text = read_text(&a.report)?;
    let report: EvalReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: a.report.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if report.schema_version != detkit_core::metrics::REPORT_SCHEMA_VERSION {
        return Err(Error::invalid(
            a.report.display().to_string(),
            format!("unsupported schema_version {}", report.schema_version),
        ));
    }
    let format = match a.format {
        CurveFormatArg::Csv => CurveFormat::Csv,
        CurveFormatArg::Json => CurveFormat::Json,
    };
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for (name, body) in curve_export(&report, format)? {
        write_atomic(&a.out_dir.join(name), body.as_bytes())?;
    }
    Ok(())
}
