//! Line-oriented dataset files.
//!
//! ```text
//! #vocabflip-dataset v1<TAB>fingerprint=..<TAB>seed=..<TAB>kind=task<TAB>task=..<TAB>...
//! <input surfaces><TAB><target surfaces><TAB><task><TAB><C1|C2><TAB><V1|V2><TAB><0|1>
//! ```
//! The fingerprint is the SHA-256 of the header (minus the fingerprint field)
//! followed by every record line.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{
    DatasetMeta, DatasetSpec, LengthRange, Objective, Phase, PretrainSpec, Sample, Setting, Sizes,
};
use crate::error::DataError;
use crate::tasks::{TaskClass, TaskKind};
use crate::token::{TokenTable, VocabName, Vocabulary};
use crate::Dataset;

pub const DATASET_MAGIC: &str = "#vocabflip-dataset v1";
const DENOISE: &str = "denoise";

fn meta_fields(meta: &DatasetMeta) -> Vec<(String, String)> {
    let mut f = vec![("seed".to_string(), meta.seed().to_string())];
    let mut push = |k: &str, v: String| f.push((k.to_string(), v));
    match meta {
        DatasetMeta::Task(s) => {
            push("kind", "task".into());
            push("task", s.task.name().into());
            push("setting", s.setting.to_string());
            push("phase", s.phase.to_string());
            push(
                "sizes",
                format!("{}/{}/{}", s.sizes.train, s.sizes.eval, s.sizes.test),
            );
            push("lengths", s.lengths.to_string());
            push("v1", s.vocab_v1.letters());
            push("v2", s.vocab_v2.letters());
        }
        DatasetMeta::Pretrain(p) => {
            push("kind", "pretrain".into());
            push("size", p.size.to_string());
            push("lengths", p.lengths.to_string());
            push("corruption", p.corruption_rate.to_string());
            push("v1", p.vocab_v1.letters());
            push("v2", p.vocab_v2.letters());
        }
    }
    f
}

fn record_line(s: &Sample) -> String {
    let table = TokenTable::standard();
    let (task, class) = match s.objective {
        Objective::Task { kind, class } => (kind.name(), class.as_str()),
        Objective::Denoise => (DENOISE, "-"),
    };
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        table.render(&s.input_tokens),
        table.render(&s.target_tokens),
        task,
        class,
        s.source_vocab,
        u8::from(s.mixed)
    )
}

fn canonical_header(meta: &DatasetMeta) -> String {
    let mut h = DATASET_MAGIC.to_string();
    for (k, v) in meta_fields(meta) {
        h.push('\t');
        h.push_str(&k);
        h.push('=');
        h.push_str(&v);
    }
    h
}

pub(super) fn fingerprint(meta: &DatasetMeta, samples: &[Sample]) -> String {
    let mut h = Sha256::new();
    h.update(canonical_header(meta).as_bytes());
    for s in samples {
        h.update(b"\n");
        h.update(record_line(s).as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = String::with_capacity(d.samples.len() * 40);
    out.push_str(DATASET_MAGIC);
    out.push_str("\tfingerprint=");
    out.push_str(&d.fingerprint);
    for (k, v) in meta_fields(&d.meta) {
        out.push('\t');
        out.push_str(&k);
        out.push('=');
        out.push_str(&v);
    }
    out.push('\n');
    for s in &d.samples {
        out.push_str(&record_line(s));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

struct Header {
    fields: Vec<(String, String)>,
}

impl Header {
    fn get(&self, key: &str) -> Result<&str, DataError> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| DataError::Parse {
                line: 1,
                msg: format!("header missing {key:?}"),
            })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, DataError> {
        let v = self.get(key)?;
        v.parse().map_err(|_| DataError::Parse {
            line: 1,
            msg: format!("bad header value {key}={v:?}"),
        })
    }
}

fn header_err<E: std::fmt::Display>(e: E) -> DataError {
    DataError::Parse {
        line: 1,
        msg: e.to_string(),
    }
}

fn parse_meta(h: &Header) -> Result<DatasetMeta, DataError> {
    let seed: u64 = h.parse("seed")?;
    let lengths: LengthRange = h.get("lengths")?.parse().map_err(header_err)?;
    let v1 = Vocabulary::from_letters(VocabName::V1, h.get("v1")?).map_err(header_err)?;
    let v2 = Vocabulary::from_letters(VocabName::V2, h.get("v2")?).map_err(header_err)?;
    match h.get("kind")? {
        "task" => {
            let sizes: Vec<usize> = h
                .get("sizes")?
                .split('/')
                .map(|s| s.parse())
                .collect::<Result<_, _>>()
                .map_err(header_err)?;
            let [train, eval, test] = sizes[..] else {
                return Err(header_err("sizes must be train/eval/test"));
            };
            Ok(DatasetMeta::Task(DatasetSpec {
                task: h.get("task")?.parse::<TaskKind>().map_err(header_err)?,
                setting: h.get("setting")?.parse::<Setting>().map_err(header_err)?,
                phase: h.get("phase")?.parse::<Phase>().map_err(header_err)?,
                sizes: Sizes { train, eval, test },
                lengths,
                vocab_v1: v1,
                vocab_v2: v2,
                seed,
            }))
        }
        "pretrain" => Ok(DatasetMeta::Pretrain(PretrainSpec {
            size: h.parse("size")?,
            lengths,
            corruption_rate: h.parse("corruption")?,
            vocab_v1: v1,
            vocab_v2: v2,
            seed,
        })),
        other => Err(header_err(format!("unknown dataset kind {other:?}"))),
    }
}

fn parse_record(line: &str, n: usize) -> Result<Sample, DataError> {
    let err = |msg: String| DataError::Parse { line: n, msg };
    let table = TokenTable::standard();
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 6 {
        return Err(err(format!("expected 6 fields, found {}", fields.len())));
    }
    let tokens = |s: &str| table.parse(s).map_err(|e| err(e.to_string()));
    let input_tokens = tokens(fields[0])?;
    let target_tokens = tokens(fields[1])?;
    if input_tokens.is_empty() || target_tokens.is_empty() {
        return Err(err("empty input or target".into()));
    }
    let objective = if fields[2] == DENOISE {
        Objective::Denoise
    } else {
        Objective::Task {
            kind: fields[2]
                .parse()
                .map_err(|e: crate::TaskError| err(e.to_string()))?,
            class: fields[3]
                .parse::<TaskClass>()
                .map_err(|e| err(e.to_string()))?,
        }
    };
    let source_vocab = fields[4]
        .parse()
        .map_err(|e: crate::TaskError| err(e.to_string()))?;
    let mixed = match fields[5] {
        "0" => false,
        "1" => true,
        other => return Err(err(format!("bad mixed flag {other:?}"))),
    };
    Ok(Sample {
        input_tokens,
        target_tokens,
        objective,
        source_vocab,
        mixed,
    })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| header_err("empty file"))?;
    let mut parts = first.split('\t');
    if parts.next() != Some(DATASET_MAGIC) {
        return Err(header_err("missing dataset header"));
    }
    let fields = parts
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| header_err(format!("bad header field {kv:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let header = Header { fields };
    let expected = header.get("fingerprint")?.to_string();
    let meta = parse_meta(&header)?;
    let samples = lines
        .enumerate()
        .map(|(i, l)| parse_record(l, i + 2))
        .collect::<Result<Vec<_>, _>>()?;
    let d = Dataset::new(meta, samples);
    if d.fingerprint != expected {
        return Err(DataError::FingerprintMismatch {
            expected,
            actual: d.fingerprint,
        });
    }
    Ok(d)
}
