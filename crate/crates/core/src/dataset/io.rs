use std::fmt::Write as _;
use std::path::Path;

use super::{pgm, EmotionLabel7, Sample, IMAGE_SIZE};
use crate::geometry::{Point, Shape, N_LANDMARKS};
use crate::{Error, Result};

pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const IMAGES_DIR: &str = "images";

fn header() -> Vec<String> {
    let mut h = vec!["id".to_string(), "label".to_string()];
    for i in 0..N_LANDMARKS {
        h.push(format!("x{i}"));
        h.push(format!("y{i}"));
    }
    h
}

/// Loads every sample listed in `<root>/annotations.csv`, in file order.
pub fn load_annotations(root: &Path) -> Result<Vec<Sample>> {
    let path = root.join(ANNOTATIONS_FILE);
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let data_err = |line: usize, msg: String| Error::Data {
        path: path.clone(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut samples = Vec::new();
    let expected = header();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| data_err(line, e.to_string()))?;
        if idx == 0 {
            if record.iter().ne(expected.iter().map(String::as_str)) {
                return Err(data_err(line, "unexpected header".into()));
            }
            continue;
        }
        if record.len() != expected.len() {
            return Err(data_err(
                line,
                format!("expected {} fields, found {}", expected.len(), record.len()),
            ));
        }
        let id = record[0].to_string();
        if id.is_empty() || id.contains(['/', '\\']) {
            return Err(data_err(line, format!("invalid sample id `{id}`")));
        }
        let label = record[1]
            .parse::<usize>()
            .map_err(|_| data_err(line, format!("label `{}` is not an integer", &record[1])))
            .and_then(|l| {
                EmotionLabel7::from_index(l).map_err(|e| data_err(line, e.to_string()))
            })?;
        let mut coords = Vec::with_capacity(2 * N_LANDMARKS);
        for (col, field) in record.iter().enumerate().skip(2) {
            let v: f64 = field.parse().map_err(|_| {
                data_err(
                    line,
                    format!("column {}: `{field}` is not a number", col + 1),
                )
            })?;
            if !(0.0..IMAGE_SIZE as f64).contains(&v) {
                return Err(data_err(
                    line,
                    format!(
                        "column {}: coordinate {v} outside [0, {IMAGE_SIZE})",
                        col + 1
                    ),
                ));
            }
            coords.push(v);
        }
        let shape = Shape::new(
            coords
                .chunks_exact(2)
                .map(|c| Point::new(c[0], c[1]))
                .collect(),
        )
        .map_err(|e| data_err(line, e.to_string()))?;

        let img_path = root.join(IMAGES_DIR).join(format!("{id}.pgm"));
        let (w, h, pixels) = pgm::read(&img_path).map_err(|e| match e {
            Error::Io { source, .. } => data_err(line, format!("{}: {source}", img_path.display())),
            other => data_err(line, other.to_string()),
        })?;
        if (w, h) != (IMAGE_SIZE, IMAGE_SIZE) {
            return Err(data_err(
                line,
                format!(
                    "{}: image is {w}x{h}, expected {IMAGE_SIZE}x{IMAGE_SIZE}",
                    img_path.display()
                ),
            ));
        }
        samples.push(Sample {
            id,
            pixels,
            shape,
            label,
        });
    }
    Ok(samples)
}

/// Writes `samples` under `root` in the layout [`load_annotations`] reads.
pub fn write_dataset(root: &Path, samples: &[Sample]) -> Result<()> {
    let images = root.join(IMAGES_DIR);
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut csv = header().join(",");
    csv.push('\n');
    for s in samples {
        pgm::write(
            &images.join(format!("{}.pgm", s.id)),
            IMAGE_SIZE,
            IMAGE_SIZE,
            &s.pixels,
        )?;
        write!(csv, "{},{}", s.id, s.label.index()).unwrap();
        for p in s.shape.points() {
            write!(csv, ",{:.6},{:.6}", p.x, p.y).unwrap();
        }
        csv.push('\n');
    }
    let path = root.join(ANNOTATIONS_FILE);
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize, GenParams};

    #[test]
    fn empty_annotation_file_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[]).unwrap();
        assert!(load_annotations(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn synthetic_set_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let params = GenParams {
            count: 10,
            seed: 11,
            ..GenParams::default()
        };
        let samples = synthesize(&params).unwrap();
        write_dataset(dir.path(), &samples).unwrap();
        let loaded = load_annotations(dir.path()).unwrap();
        assert_eq!(loaded.len(), 10);
        for (a, b) in samples.iter().zip(&loaded) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.pixels, b.pixels);
            for (p, q) in a.shape.points().iter().zip(b.shape.points()) {
                assert!((p.x - q.x).abs() <= 1e-6 && (p.y - q.y).abs() <= 1e-6);
            }
        }
    }

    fn corrupt_row(f: impl Fn(&mut Vec<String>)) -> String {
        let dir = tempfile::tempdir().unwrap();
        let params = GenParams {
            count: 3,
            ..GenParams::default()
        };
        write_dataset(dir.path(), &synthesize(&params).unwrap()).unwrap();
        let path = dir.path().join(ANNOTATIONS_FILE);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut fields: Vec<String> = lines[2].split(',').map(String::from).collect();
        f(&mut fields);
        lines[2] = fields.join(",");
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        load_annotations(dir.path()).unwrap_err().to_string()
    }

    #[test]
    fn label_out_of_range_names_line() {
        let msg = corrupt_row(|f| f[1] = "7".into());
        assert!(msg.contains(":3:") && msg.contains("label"), "{msg}");
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(corrupt_row(|f| f[5] = "abc".into()).contains(":3:"));
        assert!(corrupt_row(|f| f[5] = "64.5".into()).contains("outside"));
        assert!(corrupt_row(|f| {
            f.pop();
        })
        .contains("fields"));
        let msg = corrupt_row(|f| f[0] = "missing".into());
        assert!(msg.contains("missing.pgm"), "{msg}");
    }
}
