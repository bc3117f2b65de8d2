use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::{canonicalize_dataset, Dataset, Preprocess, TimeSeries};
use crate::error::{Error, Result};

/// Maps raw class symbols to dense ids in order of first appearance.
///
/// Numeric symbols are compared by value, so `1` and `1.0` name one class.
#[derive(Clone, Debug, Default)]
pub struct LabelMap {
    ids: IndexMap<String, usize>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Raw symbols in id order.
    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.ids.keys().map(String::as_str)
    }

    fn id_for(&mut self, raw: &str) -> usize {
        let key = match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v == v.trunc() && v.abs() < 1e15 => format!("{}", v as i64),
            Ok(v) if v.is_finite() => format!("{v}"),
            _ => raw.to_string(),
        };
        let next = self.ids.len();
        *self.ids.entry(key).or_insert(next)
    }
}

/// Parses one UCR split with a fresh label map.
pub fn parse_ucr_split(text: &str) -> Result<Vec<TimeSeries>> {
    parse_ucr_split_with(text, &mut LabelMap::new())
}

/// Parses one UCR split, extending `labels` with any unseen class symbols so
/// that train and test files share one index.
pub fn parse_ucr_split_with(text: &str, labels: &mut LabelMap) -> Result<Vec<TimeSeries>> {
    let mut out = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens: Vec<&str> = line.split(['\t', ',']).map(str::trim).collect();
        if tokens.len() < 2 && line.contains(' ') {
            tokens = line.split_whitespace().collect();
        }
        if tokens.len() < 2 {
            return Err(Error::Format {
                line: line_no,
                message: format!(
                    "expected a label and at least one value, found {} token",
                    tokens.len()
                ),
            });
        }
        if tokens[0].is_empty() {
            return Err(Error::Format {
                line: line_no,
                message: "empty label token".into(),
            });
        }
        let label = labels.id_for(tokens[0]);
        let mut values = Vec::with_capacity(tokens.len() - 1);
        for tok in &tokens[1..] {
            values.push(parse_sample(tok).map_err(|message| Error::Format {
                line: line_no,
                message,
            })?);
        }
        let values = fill_missing(&values).ok_or(Error::UnrecoverableRecord { line: line_no })?;
        out.push(TimeSeries::new(values, Some(label)));
    }
    Ok(out)
}

fn parse_sample(tok: &str) -> std::result::Result<Option<f64>, String> {
    if tok.is_empty() || tok == "?" || tok.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(format!("cannot parse sample `{tok}`")),
    }
}

/// Linear interpolation across interior gaps, nearest-value extension at the
/// edges. `None` when nothing is present.
fn fill_missing(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let present: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let first = *present.first()?;
    let last = *present.last()?;
    let mut out = vec![0.0; values.len()];
    out[..=first].fill(values[first].unwrap());
    out[last..].fill(values[last].unwrap());
    for w in present.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (va, vb) = (values[a].unwrap(), values[b].unwrap());
        out[a] = va;
        out[b] = vb;
        for (i, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let t = (i - a) as f64 / (b - a) as f64;
            *slot = va + (vb - va) * t;
        }
    }
    Some(out)
}

fn split_path(root: &Path, name: &str, split: &str) -> Option<PathBuf> {
    let file = format!("{name}_{split}.tsv");
    [root.join(&file), root.join(name).join(&file)]
        .into_iter()
        .find(|p| p.is_file())
}

fn read_split(root: &Path, name: &str, split: &str) -> Result<String> {
    let path =
        split_path(root, name, split).unwrap_or_else(|| root.join(format!("{name}_{split}.tsv")));
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

/// Loads `<root>/<name>_TRAIN.tsv` and `<root>/<name>_TEST.tsv` (the archive's
/// `<root>/<name>/` layout is accepted too) and canonicalizes every series.
pub fn load_ucr_dataset(root: &Path, name: &str, pre: &Preprocess) -> Result<Dataset> {
    let mut labels = LabelMap::new();
    let train = parse_ucr_split_with(&read_split(root, name, "TRAIN")?, &mut labels)?;
    let test = parse_ucr_split_with(&read_split(root, name, "TEST")?, &mut labels)?;
    let d = Dataset {
        name: name.to_string(),
        train,
        test,
        num_classes: labels.len().max(1),
    };
    canonicalize_dataset(d, pre)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_tab_separated_line() {
        let s = parse_ucr_split("2\t0.5\t-1.0").unwrap();
        assert_eq!(s, vec![TimeSeries::new(vec![0.5, -1.0], Some(0))]);
    }

    #[test]
    fn blank_lines_are_skipped() {
        assert!(parse_ucr_split("").unwrap().is_empty());
        assert_eq!(parse_ucr_split("\n1,1,2\n\n").unwrap().len(), 1);
    }

    #[test]
    fn interior_nan_is_interpolated() {
        let s = parse_ucr_split("1\t0.0\tNaN\t2.0").unwrap();
        assert_eq!(s[0].values, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn edge_gaps_extend_nearest_value() {
        let s = parse_ucr_split("1,,3,,,6,").unwrap();
        assert_eq!(s[0].values, vec![3.0, 3.0, 4.0, 5.0, 6.0, 6.0]);
    }

    #[test]
    fn labels_are_dense_in_first_appearance_order() {
        let mut map = LabelMap::new();
        let s = parse_ucr_split_with("5\t1\t2\n-1\t1\t2\n5.0\t3\t3", &mut map).unwrap();
        let ids: Vec<_> = s.iter().map(|t| t.label.unwrap()).collect();
        assert_eq!(ids, vec![0, 1, 0]);
        let t = parse_ucr_split_with("-1\t0\t0\n7\t0\t0", &mut map).unwrap();
        assert_eq!(t[0].label, Some(1));
        assert_eq!(t[1].label, Some(2));
        assert_eq!(map.len(), 3);
    }

    #[test]
    fn short_line_reports_line_number() {
        match parse_ucr_split("1\t2\t3\n4\n") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_missing_is_unrecoverable() {
        assert!(matches!(
            parse_ucr_split("1\tNaN\tnan\t"),
            Err(Error::UnrecoverableRecord { line: 1 })
        ));
    }

    #[test]
    fn load_reports_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_ucr_dataset(dir.path(), "Nope", &Preprocess::default()).unwrap_err();
        match err {
            Error::Io { path, .. } => assert!(path.ends_with("Nope_TRAIN.tsv")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_canonicalizes_and_shares_labels() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("Toy_TRAIN.tsv"), "a\t1\t2\t3\nb\t3\t2\t1\n").unwrap();
        std::fs::write(dir.path().join("Toy_TEST.tsv"), "b\t0\t0\t1\n").unwrap();
        let d = load_ucr_dataset(dir.path(), "Toy", &Preprocess::default()).unwrap();
        assert_eq!(d.num_classes, 2);
        assert_eq!(d.test[0].label, Some(1));
        assert!(d.train.iter().chain(&d.test).all(|s| s.values.len() == 512));
        d.validate().unwrap();
    }
}
