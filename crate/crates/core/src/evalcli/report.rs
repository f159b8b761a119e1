use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dataset::{
    load_annotations, EmotionLabel3, EmotionLabel7, LabelMap3, Sample, ANNOTATIONS_FILE, IMAGE_SIZE,
};
use crate::geometry::{normalized_landmark_error, GrayImage, N_LANDMARKS};
use crate::model::{predict_many, Prediction};
use crate::train::Checkpoint;
use crate::{Error, Result};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const CONFUSION7_CSV: &str = "confusion7.csv";
pub const CONFUSION3_CSV: &str = "confusion3.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const REPORT_HEADER: &str = "dataset,n,acc7,acc3,nme,labelmap3,checkpoint_digest";

const EVAL_BATCH: usize = 64;

/// Accuracy on both label scales plus landmark error over one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Content hash of the annotation file, so reports on copies of a dataset agree.
    pub dataset: String,
    pub n: usize,
    pub acc7: f64,
    pub acc3: f64,
    pub nme: f64,
    /// Rows are ground truth, columns predictions.
    pub confusion7: [[usize; 7]; 7],
    pub confusion3: [[usize; 3]; 3],
    /// `None` for classes absent from the ground truth.
    pub recall7: [Option<f64>; 7],
    pub label_map: LabelMap3,
    pub checkpoint_digest: String,
}

/// One evaluated sample, in annotation order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub id: String,
    pub truth: EmotionLabel7,
    pub predicted: EmotionLabel7,
    pub nme: f64,
}

/// Scores `predictions[i]` against `samples[i]`.
pub fn evaluate_predictions(
    dataset: &str,
    samples: &[Sample],
    predictions: &[Prediction],
    label_map: LabelMap3,
    checkpoint_digest: &str,
) -> Result<(EvalReport, Vec<PredictionRecord>)> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty dataset"));
    }
    if samples.len() != predictions.len() {
        return Err(Error::invalid(format!(
            "{} samples but {} predictions",
            samples.len(),
            predictions.len()
        )));
    }
    let mut confusion7 = [[0usize; 7]; 7];
    let mut confusion3 = [[0usize; 3]; 3];
    let mut nme_sum = 0.0;
    let mut records = Vec::with_capacity(samples.len());
    for (s, p) in samples.iter().zip(predictions) {
        let nme = normalized_landmark_error(&p.shape, &s.shape)?;
        nme_sum += nme;
        confusion7[s.label.index()][p.label.index()] += 1;
        confusion3[label_map.remap(s.label).index()][label_map.remap(p.label).index()] += 1;
        records.push(PredictionRecord {
            id: s.id.clone(),
            truth: s.label,
            predicted: p.label,
            nme,
        });
    }
    let n = samples.len();
    let mut recall7 = [None; 7];
    for (k, row) in confusion7.iter().enumerate() {
        let support: usize = row.iter().sum();
        if support > 0 {
            recall7[k] = Some(row[k] as f64 / support as f64);
        }
    }
    let report = EvalReport {
        dataset: dataset.to_string(),
        n,
        acc7: trace(&confusion7) as f64 / n as f64,
        acc3: trace(&confusion3) as f64 / n as f64,
        nme: nme_sum / n as f64,
        confusion7,
        confusion3,
        recall7,
        label_map,
        checkpoint_digest: checkpoint_digest.to_string(),
    };
    Ok((report, records))
}

fn trace<const K: usize>(m: &[[usize; K]; K]) -> usize {
    (0..K).map(|i| m[i][i]).sum()
}

/// Identifier of the dataset at `root`: the leading 16 hex digits of the SHA-256 of
/// its annotation file.
pub fn dataset_id(root: &Path) -> Result<String> {
    let path = root.join(ANNOTATIONS_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes))[..16].to_string())
}

/// Loads the checkpoint and dataset, checks they fit together, then predicts every
/// sample. Nothing is written.
pub fn evaluate(
    checkpoint: &Path,
    dataset: &Path,
    label_map: LabelMap3,
) -> Result<(EvalReport, Vec<PredictionRecord>)> {
    let bytes = std::fs::read(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes, checkpoint)?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let cfg = &ckpt.params.config;
    if cfg.input_size != IMAGE_SIZE
        || cfg.n_landmarks != N_LANDMARKS
        || cfg.n_classes != EmotionLabel7::COUNT
    {
        return Err(Error::invalid(format!(
            "checkpoint expects {0}x{0} inputs, {1} landmarks and {2} classes; the dataset has \
             {IMAGE_SIZE}x{IMAGE_SIZE}, {N_LANDMARKS} and {3}",
            cfg.input_size,
            cfg.n_landmarks,
            cfg.n_classes,
            EmotionLabel7::COUNT
        )));
    }
    let samples = load_annotations(dataset)?;
    let id = dataset_id(dataset)?;
    let images: Vec<GrayImage> = samples.iter().map(Sample::image).collect();
    let predictions = predict_many(&ckpt.params, &images, EVAL_BATCH)?;
    evaluate_predictions(&id, &samples, &predictions, label_map, &digest)
}

impl EvalReport {
    pub fn csv_text(&self) -> String {
        format!(
            "{REPORT_HEADER}\n{},{},{:.6},{:.6},{:.6},{},{}\n",
            self.dataset,
            self.n,
            self.acc7,
            self.acc3,
            self.nme,
            self.label_map,
            self.checkpoint_digest
        )
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "dataset       {}", self.dataset);
        let _ = writeln!(w, "samples       {}", self.n);
        let _ = writeln!(w, "label map     {}", self.label_map);
        let _ = writeln!(w, "checkpoint    {}", self.checkpoint_digest);
        let _ = writeln!(w, "accuracy-7    {:.6}", self.acc7);
        let _ = writeln!(w, "accuracy-3    {:.6}", self.acc3);
        let _ = writeln!(w, "mean NME      {:.6}", self.nme);
        let _ = writeln!(w, "\nrecall-7");
        for (label, r) in EmotionLabel7::ALL.iter().zip(self.recall7) {
            let r = r.map_or_else(|| "-".to_string(), |r| format!("{r:.6}"));
            let _ = writeln!(w, "  {:<10}  {r}", label.name());
        }
        let names7: Vec<&str> = EmotionLabel7::ALL.iter().map(|l| l.name()).collect();
        let names3: Vec<&str> = EmotionLabel3::ALL.iter().map(|l| l.name()).collect();
        let _ = writeln!(w, "\nconfusion-7 (rows: truth, columns: prediction)");
        text_matrix(w, &names7, self.confusion7.iter().map(|r| r.as_slice()));
        let _ = writeln!(w, "\nconfusion-3 (rows: truth, columns: prediction)");
        text_matrix(w, &names3, self.confusion3.iter().map(|r| r.as_slice()));
        s
    }

    /// Writes the report, both confusion matrices and per-sample predictions into
    /// `dir`, creating it if needed.
    pub fn write(&self, records: &[PredictionRecord], dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let names7: Vec<&str> = EmotionLabel7::ALL.iter().map(|l| l.name()).collect();
        let names3: Vec<&str> = EmotionLabel3::ALL.iter().map(|l| l.name()).collect();
        let mut preds = String::from("id,truth,predicted,truth3,predicted3,nme\n");
        for r in records {
            let _ = writeln!(
                preds,
                "{},{},{},{},{},{:.6}",
                r.id,
                r.truth.name(),
                r.predicted.name(),
                self.label_map.remap(r.truth).name(),
                self.label_map.remap(r.predicted).name(),
                r.nme
            );
        }
        let files = [
            (REPORT_CSV, self.csv_text()),
            (REPORT_TXT, self.text()),
            (
                CONFUSION7_CSV,
                csv_matrix(&names7, self.confusion7.iter().map(|r| r.as_slice())),
            ),
            (
                CONFUSION3_CSV,
                csv_matrix(&names3, self.confusion3.iter().map(|r| r.as_slice())),
            ),
            (PREDICTIONS_CSV, preds),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            name: String::new(),
            dataset: self.dataset.clone(),
            n: self.n,
            acc7: self.acc7,
            acc3: self.acc3,
            nme: self.nme,
            label_map: self.label_map,
            checkpoint_digest: self.checkpoint_digest.clone(),
        }
    }
}

fn text_matrix<'a>(w: &mut String, names: &[&str], rows: impl Iterator<Item = &'a [usize]>) {
    let _ = write!(w, "  {:<10}", "");
    for n in names {
        let _ = write!(w, " {n:>9}");
    }
    w.push('\n');
    for (name, row) in names.iter().zip(rows) {
        let _ = write!(w, "  {name:<10}");
        for c in row {
            let _ = write!(w, " {c:>9}");
        }
        w.push('\n');
    }
}

fn csv_matrix<'a>(names: &[&str], rows: impl Iterator<Item = &'a [usize]>) -> String {
    let mut s = format!("truth,{}\n", names.join(","));
    for (name, row) in names.iter().zip(rows) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{name},{}", cells.join(","));
    }
    s
}

/// The machine-readable line of a report, as read back from `report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    /// Display name; the report's directory when read from disk.
    pub name: String,
    pub dataset: String,
    pub n: usize,
    pub acc7: f64,
    pub acc3: f64,
    pub nme: f64,
    pub label_map: LabelMap3,
    pub checkpoint_digest: String,
}

impl ReportSummary {
    /// Reads `path`, or `path/report.csv` when `path` is a directory.
    pub fn read(path: &Path) -> Result<Self> {
        let file: PathBuf = if path.is_dir() {
            path.join(REPORT_CSV)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let err = |line: usize, msg: String| Error::Data {
            path: file.clone(),
            line,
            msg,
        };
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(err(1, format!("expected header `{REPORT_HEADER}`")));
        }
        let row = lines
            .next()
            .ok_or_else(|| err(2, "missing report row".into()))?;
        if lines.next().is_some() {
            return Err(err(3, "expected a single report row".into()));
        }
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 7 {
            return Err(err(2, format!("expected 7 fields, found {}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| err(2, format!("field {} `{}` is not a number", i + 1, f[i])))
        };
        let name = file.parent().and_then(Path::file_name).map_or_else(
            || file.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        Ok(ReportSummary {
            name,
            dataset: f[0].to_string(),
            n: f[1]
                .parse()
                .map_err(|_| err(2, format!("bad sample count `{}`", f[1])))?,
            acc7: num(2)?,
            acc3: num(3)?,
            nme: num(4)?,
            label_map: f[5].parse().map_err(|e: Error| err(2, e.to_string()))?,
            checkpoint_digest: f[6].to_string(),
        })
    }
}
