use std::collections::BTreeMap;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position of the melanoma entry in the two-element one-hot code.
pub const MELANOMA_INDEX: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionLabel {
    Benign,
    Melanoma,
}

impl ConditionLabel {
    pub fn index(self) -> usize {
        match self {
            ConditionLabel::Benign => 1 - MELANOMA_INDEX,
            ConditionLabel::Melanoma => MELANOMA_INDEX,
        }
    }

    pub fn one_hot(self) -> [f32; 2] {
        let mut v = [0.0; 2];
        v[self.index()] = 1.0;
        v
    }

    pub fn from_melanoma(melanoma: bool) -> Self {
        if melanoma {
            ConditionLabel::Melanoma
        } else {
            ConditionLabel::Benign
        }
    }

    pub fn is_melanoma(self) -> bool {
        self == ConditionLabel::Melanoma
    }

    pub fn name(self) -> &'static str {
        match self {
            ConditionLabel::Benign => "benign",
            ConditionLabel::Melanoma => "melanoma",
        }
    }

    /// Accepts `benign`/`melanoma` in any case, and `0`/`1`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        match t.to_ascii_lowercase().as_str() {
            "benign" | "0" | "0.0" => Ok(ConditionLabel::Benign),
            "melanoma" | "malignant" | "1" | "1.0" => Ok(ConditionLabel::Melanoma),
            _ => Err(Error::invalid(format!("unknown label `{t}`"))),
        }
    }
}

/// `N×2` one-hot tensor for a batch of labels.
pub fn labels_tensor(labels: &[ConditionLabel]) -> Result<Tensor> {
    let data: Vec<f32> = labels.iter().flat_map(|l| l.one_hot()).collect();
    Ok(Tensor::from_vec(data, (labels.len(), 2), &Device::Cpu)?)
}

/// Appends the label's two one-hot entries as constant planes. Accepts
/// `C×H×W` or `N×C×H×W` features (one label for the whole batch).
pub fn condition_concat(features: &Tensor, label: ConditionLabel) -> Result<Tensor> {
    match features.rank() {
        3 => {
            let x = features.unsqueeze(0)?;
            Ok(condition_concat_batch(&x, &labels_tensor(&[label])?)?.squeeze(0)?)
        }
        4 => {
            let n = features.dim(0)?;
            condition_concat_batch(features, &labels_tensor(&vec![label; n])?)
        }
        r => Err(Error::invalid(format!(
            "features must be 3-D or 4-D, got rank {r}"
        ))),
    }
}

/// Per-sample variant of [`condition_concat`]: `labels` is `N×2`.
pub fn condition_concat_batch(features: &Tensor, labels: &Tensor) -> Result<Tensor> {
    let (n, _, h, w) = features.dims4()?;
    if labels.dims() != [n, 2] {
        return Err(Error::invalid(format!(
            "labels must be {n}×2, got {:?}",
            labels.dims()
        )));
    }
    let planes = labels
        .to_dtype(features.dtype())?
        .reshape((n, 2, 1, 1))?
        .broadcast_as((n, 2, h, w))?;
    Ok(Tensor::cat(&[features, &planes], 1)?)
}

/// Parses a delimited label file (comma, tab or semicolon separated).
///
/// Two layouts are understood:
/// * `id,label` rows, label being `benign`/`melanoma`/`0`/`1`, with an
///   optional header line;
/// * a header naming a `melanoma` or `MEL` column holding 0/1 scores, as in
///   the challenge ground-truth CSVs; a score ≥ 0.5 means melanoma.
pub fn parse_label_file(text: &str) -> Result<BTreeMap<String, ConditionLabel>> {
    let split = |line: &str| -> Vec<String> {
        line.split([',', '\t', ';'])
            .map(|s| s.trim().trim_matches('"').to_string())
            .collect()
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .peekable();
    let mut column = 1usize;
    if let Some((_, first)) = lines.peek() {
        let cols = split(first);
        let is_header = ConditionLabel::parse(cols.get(1).map_or("", |s| s.as_str())).is_err();
        if is_header {
            if let Some(i) = cols
                .iter()
                .position(|c| c.eq_ignore_ascii_case("melanoma") || c.eq_ignore_ascii_case("mel"))
            {
                column = i;
            }
            lines.next();
        }
    }
    let mut out = BTreeMap::new();
    for (lineno, line) in lines {
        let cols = split(line);
        let id = cols[0].clone();
        let field = cols
            .get(column)
            .ok_or_else(|| Error::invalid(format!("line {}: missing label column", lineno + 1)))?;
        let label = ConditionLabel::parse(field)
            .or_else(|e| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(ConditionLabel::from_melanoma(v >= 0.5)),
                _ => Err(e),
            })
            .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?;
        if out.insert(id.clone(), label).is_some() {
            return Err(Error::invalid(format!(
                "line {}: duplicate id `{id}`",
                lineno + 1
            )));
        }
    }
    Ok(out)
}

/// Writes labels as `id,label` lines under an `image,label` header.
pub fn format_label_file(labels: &BTreeMap<String, ConditionLabel>) -> String {
    let mut out = String::from("image,label\n");
    for (id, l) in labels {
        out.push_str(&format!("{id},{}\n", l.name()));
    }
    out
}
