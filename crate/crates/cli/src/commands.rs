use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use artic::contour::{generate_synthetic, read_csf, write_csf, ArticulatorId, SynthConfig};
use artic::factana::{analyze, center, compute_factor_scores, relative_error, FactorSet};
use artic::ncmf::{
    compose_gestures, evaluate, segment, train as fit, unit_power_scale, Checkpoint, CtcTask,
    NcmfModel, TrainConfig,
};
use artic::numkit::Mat;
use artic::recog::{
    corpus_per, event_peaks, model_variance, range_metric, train_head, CtcHead, HeadConfig,
    DEFAULT_BEAM_WIDTH,
};
use serde_json::json;

use crate::config::{pick, FileConfig};
use crate::files::{self, FactorsDoc, TruthDoc};
use crate::{
    svg, ArgError, Common, EvalArgs, FactorsArgs, GenArgs, InvalidInput, PlotArgs, TrainArgs,
};

const DEFAULT_OUT: &str = "artic-out";

struct Setup {
    file: FileConfig,
    seed: u64,
    out: PathBuf,
}

fn setup(common: &Common) -> Result<Setup> {
    let file = FileConfig::load(common.config.as_deref())?;
    let seed = pick(common.seed, file.seed, 0);
    let out = common
        .out
        .clone()
        .or_else(|| file.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(Setup { file, seed, out })
}

pub fn gen(a: GenArgs) -> Result<()> {
    let s = setup(&a.common)?;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        p: pick(a.p, s.file.p, d.p),
        t: pick(a.t, s.file.t, d.t),
        gestures: pick(a.gestures, s.file.gestures, d.gestures),
        window: pick(a.window, s.file.window, d.window),
        seed: s.seed,
        noise_sigma: pick(a.noise, s.file.noise, d.noise_sigma),
        fps: pick(a.fps, s.file.fps, d.fps),
        partition: None,
    };
    let truth = generate_synthetic(&cfg)?;
    write_csf(&truth.contours, s.out.join("contours.csf"))?;
    files::write(
        &s.out.join("truth.json"),
        &files::to_json(&TruthDoc::new(&truth, s.seed)),
    )?;
    println!(
        "generated p={} t={} D={} K={} into {}",
        cfg.p,
        cfg.t,
        cfg.gestures,
        cfg.window,
        s.out.display()
    );
    Ok(())
}

pub fn factors(a: FactorsArgs) -> Result<()> {
    let s = setup(&a.common)?;
    let seq = read_csf(&a.input)?;
    let (f, y, err) = match &a.factors_in {
        Some(path) => {
            let doc: FactorsDoc = serde_json::from_str(&files::read(path)?)
                .map_err(|e| InvalidInput(format!("{}: {e}", path.display())))?;
            if doc.p != seq.p() {
                bail!(InvalidInput(format!(
                    "factors are for p = {}, contours have p = {}",
                    doc.p,
                    seq.p()
                )));
            }
            let f = FactorSet::new(Mat::from_rows(&doc.factors)?)?;
            f.check_support(seq.map())?;
            let (xc, _) = center(seq.x())?;
            let y = compute_factor_scores(&xc, &f)?;
            let err = relative_error(&xc, &f, &y)?;
            (f, y, err)
        }
        None => {
            let an = analyze(&seq)?;
            (an.factors, an.scores, an.relative_error)
        }
    };
    let doc = FactorsDoc {
        p: seq.p(),
        articulators: ArticulatorId::ALL
            .iter()
            .map(|a| a.label().to_string())
            .collect(),
        factors: f.matrix().to_rows(),
    };
    files::write(&s.out.join("factors.json"), &files::to_json(&doc))?;
    files::write(&s.out.join("scores.csv"), &files::format_scores(y.matrix()))?;
    let report = json!({ "p": seq.p(), "t": seq.t(), "relative_error": err });
    files::write(&s.out.join("report.json"), &files::to_json(&report))?;
    println!("relative_error {err:.6}");
    Ok(())
}

/// Start frames of the windows produced by `segment`.
fn segment_starts(t: usize, len: usize, hop: usize) -> Vec<usize> {
    (0..=t - len).step_by(hop).collect()
}

/// Labels of the peaks in `[start, start + len)`.
fn window_targets(peaks: &[(usize, usize)], start: usize, len: usize) -> Vec<usize> {
    peaks
        .iter()
        .filter(|(tau, _)| (start..start + len).contains(tau))
        .map(|&(_, label)| label)
        .collect()
}

pub fn train(a: TrainArgs) -> Result<()> {
    let s = setup(&a.common)?;
    let f = &s.file;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        lambda1: pick(a.lambda1, f.lambda1, d.lambda1),
        lambda2: pick(a.lambda2, f.lambda2, d.lambda2),
        lr0: pick(a.lr0, f.lr0, d.lr0),
        weight_decay: pick(a.weight_decay, f.weight_decay, d.weight_decay),
        updates: pick(a.updates, f.updates, d.updates),
        batch: pick(a.batch, f.batch, d.batch),
        seed: s.seed,
        decoupled_weight_decay: !(a.coupled_weight_decay
            || f.coupled_weight_decay.unwrap_or(false)),
        ..d
    };
    cfg.validate()?;
    let gestures = pick(a.gestures, f.gestures, 15);
    let window = pick(a.window, f.window, 21);

    let y = files::read_scores(&a.scores)?;
    let t = y.rows();
    let scale = unit_power_scale(&y)?;
    let ys = y.scale(scale);
    let seg_len = match pick(a.segment, f.segment, 0) {
        0 => t,
        n => n,
    };
    let hop = pick(a.hop, f.hop, 50);
    if seg_len > t {
        bail!(ArgError(format!(
            "segment length {seg_len} exceeds {t} frames"
        )));
    }
    if seg_len < window {
        bail!(ArgError(format!(
            "segment length {seg_len} is shorter than the window {window}"
        )));
    }
    let segments = segment(&ys, seg_len, hop)?;

    let mut task = if cfg.lambda2 > 0.0 {
        let Some(truth) = &a.truth else {
            bail!(ArgError(
                "lambda2 > 0 needs --truth for phone targets".into()
            ));
        };
        let doc = TruthDoc::load(truth)?;
        let act = doc.activations()?;
        if act.cols() != t {
            bail!(InvalidInput(format!(
                "truth has {} frames, scores have {t}",
                act.cols()
            )));
        }
        let peaks = event_peaks(&act);
        let targets = segment_starts(t, seg_len, hop)
            .into_iter()
            .map(|st| window_targets(&peaks, st, seg_len))
            .collect();
        Some(CtcTask {
            head: CtcHead::new(gestures, doc.gestures + 1, s.seed.wrapping_add(1))?,
            targets,
        })
    } else {
        None
    };

    let mut model = NcmfModel::new(gestures, window, s.seed)?;
    let trace = fit(&mut model, &segments, &cfg, task.as_mut())?;
    let ev = evaluate(&model, &ys)?;

    let factors = match &a.factors {
        Some(path) => {
            let doc: FactorsDoc = serde_json::from_str(&files::read(path)?)
                .map_err(|e| InvalidInput(format!("{}: {e}", path.display())))?;
            Some(FactorSet::new(
                Mat::from_rows(&doc.factors)?.scale(scale.recip()),
            )?)
        }
        None => None,
    };
    let ck = Checkpoint::new(&model, factors.as_ref(), task.as_ref().map(|t| &t.head))
        .with_score_scale(scale);
    files::write(&s.out.join("checkpoint.json"), &(ck.to_json() + "\n"))?;

    let mut csv = String::from("update,loss,mse,sparsity,lr\n");
    for r in &trace {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.update, r.loss, r.mse, r.sparsity, r.lr
        ));
    }
    files::write(&s.out.join("trace.csv"), &csv)?;
    files::write(
        &s.out.join("gestural_scores.csv"),
        &files::format_gestural(ev.h.matrix()),
    )?;

    let var = variance(&ys);
    println!(
        "mse {:.6} mse/var {:.6} sparsity {:.6}",
        ev.mse,
        ev.mse / var,
        ev.sparsity
    );
    Ok(())
}

/// Mean squared deviation of every entry from its column mean.
fn variance(y: &Mat) -> f64 {
    let (t, q) = y.shape();
    let mut total = 0.0;
    for c in 0..q {
        let col = y.col(c);
        let mean = col.iter().sum::<f64>() / t as f64;
        total += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    total / (t * q) as f64
}

/// Phone error rate of a recognizer head trained on the leading utterances
/// and tested on the trailing ones.
fn synthetic_per(
    h: &Mat,
    act: &Mat,
    utterance: usize,
    test: usize,
    head_cfg: &HeadConfig,
    width: usize,
) -> Result<f64> {
    let t = h.cols();
    if utterance < 2 {
        bail!(ArgError(format!("utterance length {utterance}")));
    }
    let n = t / utterance;
    if test == 0 || n <= test {
        bail!(ArgError(format!(
            "{n} utterances of {utterance} frames leave none for training with {test} held out"
        )));
    }
    let rms = (h.data().iter().map(|v| v * v).sum::<f64>() / h.data().len() as f64).sqrt();
    let norm = if rms > 0.0 { rms.recip() } else { 1.0 };
    let peaks = event_peaks(act);
    let rows: Vec<usize> = (0..h.rows()).collect();
    let utts: Vec<(Mat, Vec<usize>)> = (0..n)
        .map(|i| {
            let cols: Vec<usize> = (i * utterance..(i + 1) * utterance).collect();
            (
                h.select(&rows, &cols).scale(norm),
                window_targets(&peaks, i * utterance, utterance),
            )
        })
        .collect();
    let (train_set, test_set) = utts.split_at(n - test);
    if test_set.iter().all(|u| u.1.is_empty()) {
        bail!(InvalidInput(
            "held-out utterances contain no phone events".into()
        ));
    }
    let feats: Vec<Mat> = train_set.iter().map(|u| u.0.clone()).collect();
    let targets: Vec<Vec<usize>> = train_set.iter().map(|u| u.1.clone()).collect();
    let mut head = CtcHead::new(h.rows(), act.rows() + 1, head_cfg.seed)?;
    train_head(&mut head, &feats, &targets, head_cfg)?;
    let mut pairs = Vec::new();
    for (x, reference) in test_set {
        pairs.push((head.decode(x, width)?, reference.clone()));
    }
    Ok(corpus_per(&pairs)?)
}

struct ReportRow {
    feature: String,
    n_speakers: usize,
    per: Option<f64>,
    range: Option<f64>,
    model_variance: Option<f64>,
    sparsity: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.4}"))
}

/// Rows `feature,model,v1..vn` with model `base` or `large`.
fn read_per_table(path: &Path) -> Result<Vec<(String, String, Vec<f64>)>> {
    let text = files::read(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(head) = lines.next() else {
        bail!(InvalidInput(format!("{}: empty table", path.display())));
    };
    let cols = head.split(',').count();
    if cols < 4 {
        bail!(InvalidInput(format!(
            "{}: need feature,model and at least two sizes",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols {
            bail!(InvalidInput(format!(
                "{} row {}: {} fields, header has {cols}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        if fields[1] != "base" && fields[1] != "large" {
            bail!(InvalidInput(format!(
                "{} row {}: model must be base or large",
                path.display(),
                i + 1
            )));
        }
        let values = fields[2..]
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| InvalidInput(format!("{} row {}: {e}", path.display(), i + 1)))?;
        rows.push((fields[0].to_string(), fields[1].to_string(), values));
    }
    Ok(rows)
}

fn per_table_rows(path: &Path) -> Result<Vec<ReportRow>> {
    let table = read_per_table(path)?;
    let mut out = Vec::new();
    for (feature, model, values) in &table {
        let mv = if model == "large" {
            match table.iter().find(|(f, m, _)| f == feature && m == "base") {
                Some((_, _, base)) => Some(model_variance(base, values)?),
                None => None,
            }
        } else {
            None
        };
        out.push(ReportRow {
            feature: format!("{feature}/{model}"),
            n_speakers: values.len(),
            per: values.last().copied(),
            range: Some(range_metric(values)?),
            model_variance: mv,
            sparsity: None,
        });
    }
    Ok(out)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let s = setup(&a.common)?;
    let f = &s.file;
    let mut rows = Vec::new();
    if a.per && a.truth.is_none() {
        bail!(ArgError("--per needs --truth for phone targets".into()));
    }
    match (&a.checkpoint, &a.scores) {
        (Some(ck_path), Some(scores)) => {
            let ck = Checkpoint::from_json(&files::read(ck_path)?)?;
            let model = ck.model()?;
            let y = files::read_scores(scores)?.scale(ck.score_scale());
            let ev = evaluate(&model, &y)?;
            let per = match &a.truth {
                Some(truth) => {
                    let act = TruthDoc::load(truth)?.activations()?;
                    if act.cols() != y.rows() {
                        bail!(InvalidInput(format!(
                            "truth has {} frames, scores have {}",
                            act.cols(),
                            y.rows()
                        )));
                    }
                    let head_cfg = HeadConfig {
                        updates: pick(
                            a.head_updates,
                            f.head_updates,
                            HeadConfig::default().updates,
                        ),
                        seed: s.seed,
                        ..HeadConfig::default()
                    };
                    Some(synthetic_per(
                        ev.h.matrix(),
                        &act,
                        pick(a.utterance, f.utterance, 100),
                        pick(a.test_utterances, f.test_utterances, 3),
                        &head_cfg,
                        pick(a.beam_width, f.beam_width, DEFAULT_BEAM_WIDTH),
                    )?)
                }
                None => None,
            };
            rows.push(ReportRow {
                feature: "gestural_scores".into(),
                n_speakers: 1,
                per,
                range: None,
                model_variance: None,
                sparsity: Some(ev.sparsity),
            });
        }
        (None, None) => {}
        _ => bail!(ArgError("--checkpoint and --scores go together".into())),
    }
    if let Some(table) = &a.per_table {
        rows.extend(per_table_rows(table)?);
    }
    if rows.is_empty() {
        bail!(ArgError(
            "nothing to evaluate: give --checkpoint with --scores, or --per-table".into()
        ));
    }
    let mut csv = String::from("feature,n_speakers,per,range,model_variance,sparsity\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.feature,
            r.n_speakers,
            cell(r.per),
            cell(r.range),
            cell(r.model_variance),
            cell(r.sparsity)
        ));
    }
    files::write(&s.out.join("report.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn plot(a: PlotArgs) -> Result<()> {
    let s = setup(&a.common)?;
    if a.scores.is_none() && a.checkpoint.is_none() {
        bail!(ArgError("give --scores, --checkpoint, or both".into()));
    }
    if let Some(path) = &a.scores {
        let h = files::read_gestural(path)?;
        files::write(&s.out.join("heatmap.svg"), &svg::heatmap(&h))?;
    }
    if let Some(path) = &a.checkpoint {
        let ck = Checkpoint::from_json(&files::read(path)?)?;
        let Some(factors) = ck.factors()? else {
            bail!(InvalidInput(format!(
                "{} has no factors to compose gestures with",
                path.display()
            )));
        };
        let g = compose_gestures(&ck.model()?, &factors)?;
        let strips: Vec<Mat> = (0..ck.model()?.gestures())
            .map(|d| g.trajectory(d))
            .collect();
        files::write(&s.out.join("gestures.svg"), &svg::gesture_strips(&strips))?;
    }
    Ok(())
}
