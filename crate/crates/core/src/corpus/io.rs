use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, CorpusView, CorruptionConfig, MixtureSpec, Origin, ProvenanceRecord};

const SAMPLE_FORMAT: &str = "sc-gan-corpus";
const PROVENANCE_FORMAT: &str = "sc-gan-provenance";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "K_total")]
    k_total: usize,
    d: usize,
    n_labeled: usize,
    n_unlabeled: usize,
    cfg: Option<CorruptionConfig>,
    mixture: Option<MixtureSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    id: usize,
    role: Origin,
    x: Vec<f64>,
    #[serde(default)]
    given_label: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceHeader {
    format: String,
    version: u32,
    n: usize,
}

/// `corpus.jsonl` -> `corpus.provenance.jsonl`.
pub fn provenance_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.provenance.jsonl"))
}

fn push_floats(out: &mut String, xs: impl Iterator<Item = f64>) {
    out.push('[');
    for (i, v) in xs.enumerate() {
        if i > 0 {
            out.push(',');
        }
        // 17 significant digits.
        write!(out, "{v:.16e}").unwrap();
    }
    out.push(']');
}

/// Renders the sample file and the provenance file as strings.
pub fn write_corpus(corpus: &Corpus) -> (String, String) {
    let view = corpus.view();
    let header = Header {
        format: SAMPLE_FORMAT.into(),
        version: VERSION,
        k: view.num_classes,
        k_total: corpus.k_total,
        d: view.dim,
        n_labeled: view.num_labeled(),
        n_unlabeled: view.num_unlabeled(),
        cfg: corpus.config.clone(),
        mixture: corpus.mixture.clone(),
    };
    let mut samples = serde_json::to_string(&header).expect("header serializes");
    samples.push('\n');
    for (i, row) in view.labeled_x.rows().into_iter().enumerate() {
        write!(samples, "{{\"id\":{i},\"role\":\"labeled\",\"x\":").unwrap();
        push_floats(&mut samples, row.iter().copied());
        writeln!(samples, ",\"given_label\":{}}}", view.labeled_y[i]).unwrap();
    }
    let n_l = view.num_labeled();
    for (i, row) in view.unlabeled_x.rows().into_iter().enumerate() {
        write!(samples, "{{\"id\":{},\"role\":\"unlabeled\",\"x\":", n_l + i).unwrap();
        push_floats(&mut samples, row.iter().copied());
        samples.push_str("}\n");
    }

    let mut prov = serde_json::to_string(&ProvenanceHeader {
        format: PROVENANCE_FORMAT.into(),
        version: VERSION,
        n: corpus.provenance.len(),
    })
    .expect("header serializes");
    prov.push('\n');
    for p in &corpus.provenance {
        prov.push_str(&serde_json::to_string(p).expect("record serializes"));
        prov.push('\n');
    }
    (samples, prov)
}

/// Writes `path` and its provenance sibling.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let (samples, prov) = write_corpus(corpus);
    fs::write(path, samples)?;
    fs::write(provenance_path(path), prov)?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        message: message.into(),
    }
}

fn read_view<R: Read>(r: R) -> Result<(CorpusView, Header), CorpusError> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| parse_err(1, "missing header"))??;
    let header: Header = serde_json::from_str(&first).map_err(|e| parse_err(1, format!("header: {e}")))?;
    if header.format != SAMPLE_FORMAT || header.version != VERSION {
        return Err(parse_err(
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    let n = header.n_labeled + header.n_unlabeled;
    let d = header.d;
    let mut labeled = Vec::with_capacity(header.n_labeled * d);
    let mut labels = Vec::with_capacity(header.n_labeled);
    let mut unlabeled = Vec::with_capacity(header.n_unlabeled * d);
    for expected_id in 0..n {
        let line_no = expected_id + 2;
        let line = lines
            .next()
            .ok_or_else(|| parse_err(line_no, format!("file ends before record id {expected_id}")))??;
        let rec: SampleRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(line_no, format!("record id {expected_id}: {e}")))?;
        if rec.id != expected_id {
            return Err(parse_err(
                line_no,
                format!("expected id {expected_id}, found {}", rec.id),
            ));
        }
        if rec.x.len() != d {
            return Err(parse_err(
                line_no,
                format!("record id {}: x has {} values, expected {d}", rec.id, rec.x.len()),
            ));
        }
        let want_role = if expected_id < header.n_labeled {
            Origin::Labeled
        } else {
            Origin::Unlabeled
        };
        if rec.role != want_role {
            return Err(parse_err(
                line_no,
                format!("record id {}: unexpected role {:?}", rec.id, rec.role),
            ));
        }
        match (rec.role, rec.given_label) {
            (Origin::Labeled, Some(y)) if y < header.k => {
                labeled.extend(rec.x);
                labels.push(y);
            }
            (Origin::Labeled, _) => {
                return Err(parse_err(
                    line_no,
                    format!("record id {}: labeled sample needs given_label < {}", rec.id, header.k),
                ));
            }
            (Origin::Unlabeled, None) => unlabeled.extend(rec.x),
            (Origin::Unlabeled, Some(_)) => {
                return Err(parse_err(
                    line_no,
                    format!("record id {}: unlabeled sample carries a label", rec.id),
                ));
            }
        }
    }
    for (extra, line) in lines.enumerate() {
        if !line?.trim().is_empty() {
            return Err(parse_err(n + 2 + extra, "unexpected record after the declared count"));
        }
    }
    let view = CorpusView {
        num_classes: header.k,
        dim: d,
        labeled_x: Array2::from_shape_vec((header.n_labeled, d), labeled).expect("sizes checked"),
        labeled_y: labels,
        unlabeled_x: Array2::from_shape_vec((header.n_unlabeled, d), unlabeled).expect("sizes checked"),
    };
    Ok((view, header))
}

fn read_provenance<R: Read>(r: R, n: usize) -> Result<Vec<ProvenanceRecord>, CorpusError> {
    let mut lines = BufReader::new(r).lines();
    let first = lines
        .next()
        .ok_or_else(|| parse_err(1, "provenance: missing header"))??;
    let header: ProvenanceHeader =
        serde_json::from_str(&first).map_err(|e| parse_err(1, format!("provenance header: {e}")))?;
    if header.format != PROVENANCE_FORMAT || header.n != n {
        return Err(parse_err(1, format!("provenance header does not describe {n} samples")));
    }
    let mut out = Vec::with_capacity(n);
    for expected_id in 0..n {
        let line_no = expected_id + 2;
        let line = lines
            .next()
            .ok_or_else(|| parse_err(line_no, format!("provenance ends before record id {expected_id}")))??;
        let rec: ProvenanceRecord = serde_json::from_str(&line)
            .map_err(|e| parse_err(line_no, format!("provenance record id {expected_id}: {e}")))?;
        if rec.id != expected_id {
            return Err(parse_err(
                line_no,
                format!("provenance: expected id {expected_id}, found {}", rec.id),
            ));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Parses a sample file and its provenance file.
pub fn read_corpus<R1: Read, R2: Read>(samples: R1, provenance: R2) -> Result<Corpus, CorpusError> {
    let (view, header) = read_view(samples)?;
    let prov = read_provenance(provenance, view.num_labeled() + view.num_unlabeled())?;
    for (i, p) in prov.iter().enumerate() {
        let want = if i < view.num_labeled() {
            Origin::Labeled
        } else {
            Origin::Unlabeled
        };
        if p.origin != want || p.true_class >= header.k_total {
            return Err(parse_err(
                i + 2,
                format!("provenance record id {i} inconsistent with sample file"),
            ));
        }
    }
    Corpus::new(view, header.k_total, prov, header.cfg, header.mixture)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    read_corpus(fs::File::open(path)?, fs::File::open(provenance_path(path))?)
}

/// Reads only the sample file; no provenance is touched.
pub fn load_corpus_view(path: &Path) -> Result<CorpusView, CorpusError> {
    Ok(read_view(fs::File::open(path)?)?.0)
}
