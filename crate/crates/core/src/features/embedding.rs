use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{DenseVector, FeatureError};

/// Upper bound on the vector dimension accepted from a header.
const MAX_DIM: usize = 1 << 16;
/// Upper bound on a single word in the binary format.
const MAX_WORD_BYTES: usize = 1 << 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingFormat {
    /// `vocab_size dim` header, then `word v1 ... v_dim` per line.
    Text,
    /// word2vec binary: text header, then `word<space>` followed by `dim` little-endian f32.
    Binary,
}

impl EmbeddingFormat {
    /// `.bin` files are binary, anything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => EmbeddingFormat::Binary,
            _ => EmbeddingFormat::Text,
        }
    }
}

/// Word -> vector lookup; every vector has the table's dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    fn with_dim(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    fn push(&mut self, word: &str, values: &[f32]) {
        if self.index.contains_key(word) {
            return;
        }
        self.index.insert(word.to_owned(), self.index.len());
        self.data.extend_from_slice(values);
    }

    /// Reads the text format. With `keep`, only listed words are retained.
    pub fn read_text<R: BufRead>(
        reader: R,
        keep: Option<&HashSet<String>>,
    ) -> Result<Self, FeatureError> {
        let mut lines = reader.split(b'\n').enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(FeatureError::BadHeader("empty file".into())),
        };
        let dim = parse_header(&header)?;
        let mut table = EmbeddingTable::with_dim(dim);
        let mut values = Vec::with_capacity(dim);

        for (i, raw) in lines {
            let line = i + 1;
            let raw = raw?;
            let text = std::str::from_utf8(&raw).map_err(|_| FeatureError::BadRecord {
                line,
                reason: "invalid UTF-8".into(),
            })?;
            let mut fields = text.split_ascii_whitespace();
            let Some(word) = fields.next() else { continue };
            let fields: Vec<&str> = fields.collect();
            if fields.len() != dim {
                return Err(FeatureError::DimensionMismatch {
                    line,
                    expected: dim,
                    found: fields.len(),
                });
            }
            values.clear();
            for field in fields {
                let v: f32 = field.parse().map_err(|_| FeatureError::BadRecord {
                    line,
                    reason: format!("`{field}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(FeatureError::BadRecord {
                        line,
                        reason: "non-finite value".into(),
                    });
                }
                values.push(v);
            }
            if keep.is_none_or(|k| k.contains(word)) {
                table.push(word, &values);
            }
        }
        Ok(table)
    }

    /// Reads the binary format. With `keep`, only listed words are retained.
    pub fn read_binary<R: BufRead>(
        mut reader: R,
        keep: Option<&HashSet<String>>,
    ) -> Result<Self, FeatureError> {
        let mut header = Vec::new();
        reader.read_until(b'\n', &mut header)?;
        if header.last() != Some(&b'\n') {
            return Err(FeatureError::BadHeader("missing header line".into()));
        }
        let (count, dim) = header_fields(&header)?;
        let mut table = EmbeddingTable::with_dim(dim);
        let mut word = Vec::new();
        let mut bytes = vec![0u8; dim * 4];
        let mut values = vec![0f32; dim];

        for entry in 0..count {
            let line = entry + 2;
            word.clear();
            loop {
                let mut b = [0u8; 1];
                if reader.read(&mut b)? == 0 {
                    return Err(FeatureError::BadRecord {
                        line,
                        reason: "truncated entry".into(),
                    });
                }
                match b[0] {
                    b' ' => break,
                    b'\n' if word.is_empty() => continue,
                    c => word.push(c),
                }
                if word.len() > MAX_WORD_BYTES {
                    return Err(FeatureError::BadRecord {
                        line,
                        reason: "word too long".into(),
                    });
                }
            }
            reader
                .read_exact(&mut bytes)
                .map_err(|_| FeatureError::BadRecord {
                    line,
                    reason: "truncated vector".into(),
                })?;
            for (v, chunk) in values.iter_mut().zip(bytes.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(FeatureError::BadRecord {
                    line,
                    reason: "non-finite value".into(),
                });
            }
            let word = std::str::from_utf8(&word).map_err(|_| FeatureError::BadRecord {
                line,
                reason: "invalid UTF-8".into(),
            })?;
            if keep.is_none_or(|k| k.contains(word)) {
                table.push(word, &values);
            }
        }
        Ok(table)
    }
}

fn header_fields(header: &[u8]) -> Result<(usize, usize), FeatureError> {
    let text =
        std::str::from_utf8(header).map_err(|_| FeatureError::BadHeader("invalid UTF-8".into()))?;
    let fields: Vec<&str> = text.split_ascii_whitespace().collect();
    let [count, dim] = fields[..] else {
        return Err(FeatureError::BadHeader(format!(
            "expected `vocab_size dim`, got `{}`",
            text.trim()
        )));
    };
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| FeatureError::BadHeader(format!("`{s}` is not a count")))
    };
    let (count, dim) = (parse(count)?, parse(dim)?);
    if dim == 0 || dim > MAX_DIM {
        return Err(FeatureError::BadHeader(format!(
            "unsupported dimension {dim}"
        )));
    }
    Ok((count, dim))
}

fn parse_header(header: &[u8]) -> Result<usize, FeatureError> {
    header_fields(header).map(|(_, dim)| dim)
}

/// Loads a table, picking the format from the file extension.
pub fn load_embedding_table(
    path: impl AsRef<Path>,
    keep: Option<&HashSet<String>>,
) -> Result<EmbeddingTable, FeatureError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    match EmbeddingFormat::from_path(path) {
        EmbeddingFormat::Text => EmbeddingTable::read_text(reader, keep),
        EmbeddingFormat::Binary => EmbeddingTable::read_binary(reader, keep),
    }
}

/// Mean of the vectors of tokens present in the table; the zero vector when none are.
pub fn embed_average<T: AsRef<str>>(tokens: &[T], table: &EmbeddingTable) -> DenseVector {
    let mut sum = vec![0.0f64; table.dim()];
    let mut hits = 0usize;
    for t in tokens {
        if let Some(v) = table.get(t.as_ref()) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += f64::from(*x);
            }
            hits += 1;
        }
    }
    if hits > 0 {
        let n = hits as f64;
        for s in &mut sum {
            *s /= n;
        }
    }
    DenseVector { values: sum }
}
