//! Per-label and macro F1, experiment reports and their rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextWindow;
use crate::corpus::TaxonomyKind;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no reports found")]
    NoReports,
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Confusion counts for one binary label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn from_vectors(predictions: ArrayView1<'_, bool>, truths: ArrayView1<'_, bool>) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in predictions.iter().zip(truths) {
            c.add(p, t);
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; 0 whenever it would be 0/0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

impl LabelMetrics {
    fn from_confusion(label: &str, c: &Confusion) -> Self {
        LabelMetrics {
            label: label.to_owned(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            support: c.support(),
        }
    }
}

fn check_shapes(a: (usize, usize), b: (usize, usize)) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::ShapeMismatch(format!(
            "predictions {a:?} vs truths {b:?}"
        )));
    }
    Ok(())
}

/// Metrics for column `label` of aligned prediction and truth matrices.
pub fn per_label_f1(
    predictions: ArrayView2<'_, bool>,
    truths: ArrayView2<'_, bool>,
    label: usize,
) -> Result<Confusion, EvalError> {
    check_shapes(predictions.dim(), truths.dim())?;
    if label >= predictions.ncols() {
        return Err(EvalError::ShapeMismatch(format!(
            "label {label} out of {} columns",
            predictions.ncols()
        )));
    }
    Ok(Confusion::from_vectors(
        predictions.column(label),
        truths.column(label),
    ))
}

/// Unweighted mean of per-label F1 over every column.
pub fn macro_f1(
    predictions: ArrayView2<'_, bool>,
    truths: ArrayView2<'_, bool>,
) -> Result<f64, EvalError> {
    check_shapes(predictions.dim(), truths.dim())?;
    let n = predictions.ncols();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = (0..n)
        .map(|j| Confusion::from_vectors(predictions.column(j), truths.column(j)).f1())
        .sum();
    Ok(sum / n as f64)
}

/// What produced a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Feature type or LLM mode, e.g. `bow` or `llm_few_shot`.
    pub method: String,
    pub taxonomy: TaxonomyKind,
    pub context: ContextWindow,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub thresholds: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub config: ReportConfig,
    pub labels: Vec<LabelMetrics>,
    pub macro_f1: f64,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    label: &'a str,
    precision: f64,
    recall: f64,
    f1: f64,
    support: usize,
}

impl F1Report {
    pub fn evaluate(
        predictions: ArrayView2<'_, bool>,
        truths: ArrayView2<'_, bool>,
        labels: &[String],
        config: ReportConfig,
    ) -> Result<Self, EvalError> {
        check_shapes(predictions.dim(), truths.dim())?;
        if labels.len() != predictions.ncols() {
            return Err(EvalError::ShapeMismatch(format!(
                "{} labels for {} columns",
                labels.len(),
                predictions.ncols()
            )));
        }
        let labels: Vec<LabelMetrics> = labels
            .iter()
            .enumerate()
            .map(|(j, l)| {
                LabelMetrics::from_confusion(
                    l,
                    &Confusion::from_vectors(predictions.column(j), truths.column(j)),
                )
            })
            .collect();
        let macro_f1 = mean(labels.iter().map(|m| m.f1));
        Ok(F1Report {
            config,
            labels,
            macro_f1,
        })
    }

    pub fn get(&self, label: &str) -> Option<&LabelMetrics> {
        self.labels.iter().find(|m| m.label == label)
    }

    /// Per-label rows followed by a `macro_avg` row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        for m in &self.labels {
            w.serialize(CsvRow {
                label: &m.label,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                support: m.support,
            })?;
        }
        w.serialize(CsvRow {
            label: "macro_avg",
            precision: mean(self.labels.iter().map(|m| m.precision)),
            recall: mean(self.labels.iter().map(|m| m.recall)),
            f1: self.macro_f1,
            support: self.labels.iter().map(|m| m.support).sum(),
        })?;
        w.flush()?;
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| EvalError::Malformed(e.to_string()))?;
        w.flush()?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| EvalError::Malformed(e.to_string()))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = mean(values.iter().copied());
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (m, var.sqrt())
}

/// One sweep measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub taxonomy: TaxonomyKind,
    pub x: ContextWindow,
    pub seed: u64,
    pub macro_f1: f64,
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["taxonomy", "x", "seed", "macro_f1"])?;
    for p in points {
        w.write_record([
            p.taxonomy.short_name().to_string(),
            p.x.to_string(),
            p.seed.to_string(),
            p.macro_f1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Seed-averaged `(x, macro_f1)` curve for one taxonomy, ordered by x.
pub fn average_curve(points: &[SweepPoint], taxonomy: TaxonomyKind) -> Vec<(ContextWindow, f64)> {
    let mut by_x: BTreeMap<ContextWindow, Vec<f64>> = BTreeMap::new();
    for p in points.iter().filter(|p| p.taxonomy == taxonomy) {
        by_x.entry(p.x).or_default().push(p.macro_f1);
    }
    by_x.into_iter().map(|(x, v)| (x, mean_std(&v).0)).collect()
}

/// Column position: LLM modes, then TF-IDF, BoW, Word2Vec and imported sentence embeddings.
fn method_rank(method: &str) -> u8 {
    match method {
        m if m.starts_with("llm") => 0,
        "tfidf" => 1,
        "bow" => 2,
        "word2vec" => 3,
        "sentence_import" => 4,
        _ => 5,
    }
}

fn order_methods(methods: &mut [String]) {
    methods.sort_by(|a, b| method_rank(a).cmp(&method_rank(b)).then_with(|| a.cmp(b)));
}

/// Per-label F1 averaged over seeds, one column per method.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub taxonomy: TaxonomyKind,
    pub context: ContextWindow,
    pub methods: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
    /// Mean and sample std of macro-F1 over seeds, per method.
    pub macro_f1: Vec<(f64, f64)>,
    pub runs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSeries {
    pub taxonomy: TaxonomyKind,
    pub method: String,
    pub points: Vec<(ContextWindow, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedReport {
    pub tables: Vec<ReportTable>,
    pub sweeps: Vec<SweepSeries>,
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}

impl ReportTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["label".to_string()];
        header.extend(self.methods.iter().cloned());
        w.write_record(&header)?;
        for (label, cells) in &self.rows {
            let mut record = vec![label.clone()];
            record.extend(
                cells
                    .iter()
                    .map(|c| c.map_or(String::new(), |v| v.to_string())),
            );
            w.write_record(&record)?;
        }
        for (name, pick) in [("macro_avg", 0), ("macro_std", 1)] {
            let mut record = vec![name.to_string()];
            record.extend(
                self.macro_f1
                    .iter()
                    .map(|ms| if pick == 0 { ms.0 } else { ms.1 }.to_string()),
            );
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let macro_cells: Vec<String> = self
            .macro_f1
            .iter()
            .zip(&self.runs)
            .map(|((m, s), n)| {
                if *n > 1 {
                    format!("{m:.2} ± {s:.2}")
                } else {
                    format!("{m:.2}")
                }
            })
            .collect();
        let label_width = self
            .rows
            .iter()
            .map(|(l, _)| l.chars().count())
            .chain([9])
            .max()
            .unwrap_or(9);
        let widths: Vec<usize> = self
            .methods
            .iter()
            .zip(&macro_cells)
            .map(|(m, c)| m.chars().count().max(c.chars().count()).max(4))
            .collect();

        let mut out = String::new();
        let _ = writeln!(out, "{} (x = {})", self.taxonomy, self.context);
        let _ = write!(out, "{:<label_width$}", "label");
        for (m, w) in self.methods.iter().zip(&widths) {
            let _ = write!(out, "  {m:>w$}");
        }
        out.push('\n');
        let rule = label_width + widths.iter().map(|w| w + 2).sum::<usize>();
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for (label, cells) in &self.rows {
            let _ = write!(out, "{label:<label_width$}");
            for (c, w) in cells.iter().zip(&widths) {
                let _ = write!(out, "  {:>w$}", fmt_cell(*c));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<label_width$}", "macro avg");
        for (c, w) in macro_cells.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
        out
    }
}

/// Groups reports into one table per taxonomy and context window, averaging seeds,
/// and collects a seed-averaged macro-F1 series over context windows per method.
pub fn render_report(reports: &[F1Report]) -> Result<RenderedReport, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let mut groups: BTreeMap<(TaxonomyKind, ContextWindow), Vec<&F1Report>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.config.taxonomy, r.config.context))
            .or_default()
            .push(r);
    }

    let mut tables = Vec::new();
    for ((taxonomy, context), group) in groups {
        let mut methods: Vec<String> = group.iter().map(|r| r.config.method.clone()).collect();
        order_methods(&mut methods);
        methods.dedup();

        let mut labels: Vec<String> = Vec::new();
        for r in &group {
            for m in &r.labels {
                if !labels.contains(&m.label) {
                    labels.push(m.label.clone());
                }
            }
        }

        let runs_of = |method: &str| -> Vec<&F1Report> {
            group
                .iter()
                .copied()
                .filter(|r| r.config.method == method)
                .collect()
        };
        let rows = labels
            .iter()
            .map(|label| {
                let cells = methods
                    .iter()
                    .map(|method| {
                        let values: Vec<f64> = runs_of(method)
                            .into_iter()
                            .filter_map(|r| r.get(label).map(|m| m.f1))
                            .collect();
                        (!values.is_empty()).then(|| mean_std(&values).0)
                    })
                    .collect();
                (label.clone(), cells)
            })
            .collect();
        let macro_f1 = methods
            .iter()
            .map(|method| {
                mean_std(
                    &runs_of(method)
                        .iter()
                        .map(|r| r.macro_f1)
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let runs = methods.iter().map(|m| runs_of(m).len()).collect();
        tables.push(ReportTable {
            taxonomy,
            context,
            methods,
            rows,
            macro_f1,
            runs,
        });
    }

    let mut series: BTreeMap<(TaxonomyKind, String), BTreeMap<ContextWindow, Vec<f64>>> =
        BTreeMap::new();
    for r in reports {
        series
            .entry((r.config.taxonomy, r.config.method.clone()))
            .or_default()
            .entry(r.config.context)
            .or_default()
            .push(r.macro_f1);
    }
    let mut sweeps: Vec<SweepSeries> = series
        .into_iter()
        .map(|((taxonomy, method), by_x)| SweepSeries {
            taxonomy,
            method,
            points: by_x.into_iter().map(|(x, v)| (x, mean_std(&v).0)).collect(),
        })
        .collect();
    sweeps.sort_by(|a, b| {
        a.taxonomy
            .cmp(&b.taxonomy)
            .then_with(|| method_rank(&a.method).cmp(&method_rank(&b.method)))
            .then_with(|| a.method.cmp(&b.method))
    });
    Ok(RenderedReport { tables, sweeps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn config(method: &str, seed: u64) -> ReportConfig {
        ReportConfig {
            method: method.into(),
            taxonomy: TaxonomyKind::UserIntent,
            context: ContextWindow::CURRENT,
            seed: Some(seed),
            thresholds: None,
        }
    }

    #[test]
    fn f1_definition() {
        let c = Confusion {
            tp: 1,
            fp: 1,
            fn_: 0,
            tn: 0,
        };
        assert_eq!(c.precision(), 0.5);
        assert_eq!(c.recall(), 1.0);
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(Confusion::default().f1(), 0.0);
    }

    #[test]
    fn identity_and_zero_division() {
        let y = array![[true, false], [false, false], [true, false]];
        let c = per_label_f1(y.view(), y.view(), 0).unwrap();
        assert_eq!(c.f1(), 1.0);
        let c = per_label_f1(y.view(), y.view(), 1).unwrap();
        assert_eq!((c.precision(), c.recall(), c.f1()), (0.0, 0.0, 0.0));
        assert_eq!(macro_f1(y.view(), y.view()).unwrap(), 0.5);
        assert!(per_label_f1(y.view(), y.view(), 2).is_err());
        assert!(macro_f1(y.view(), array![[true, false]].view()).is_err());
    }

    #[test]
    fn report_macro_is_mean_of_labels() {
        let pred = array![[true, true], [false, true]];
        let truth = array![[true, false], [false, true]];
        let labels = vec!["a".to_string(), "b".to_string()];
        let r = F1Report::evaluate(pred.view(), truth.view(), &labels, config("bow", 0)).unwrap();
        assert_eq!(r.get("a").unwrap().f1, 1.0);
        assert!((r.get("b").unwrap().f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.macro_f1 - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(r.get("b").unwrap().support, 1);

        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "label,precision,recall,f1,support");
        assert!(lines[1].starts_with("a,1.0,1.0,1.0,1"));
        assert!(lines[3].starts_with("macro_avg,"));
    }

    #[test]
    fn table_columns_follow_method_order() {
        let labels = vec!["a".to_string()];
        let y = array![[true]];
        let reports: Vec<F1Report> = ["word2vec", "bow", "tfidf"]
            .iter()
            .map(|m| F1Report::evaluate(y.view(), y.view(), &labels, config(m, 0)).unwrap())
            .collect();
        let rendered = render_report(&reports).unwrap();
        assert_eq!(rendered.tables.len(), 1);
        assert_eq!(rendered.tables[0].methods, ["tfidf", "bow", "word2vec"]);
        let text = rendered.tables[0].to_text();
        assert!(text.contains("macro avg"));
    }

    #[test]
    fn seeds_are_averaged() {
        let labels = vec!["a".to_string()];
        let good = array![[true], [false]];
        let truth = array![[true], [false]];
        let bad = array![[false], [true]];
        let reports = vec![
            F1Report::evaluate(good.view(), truth.view(), &labels, config("bow", 0)).unwrap(),
            F1Report::evaluate(bad.view(), truth.view(), &labels, config("bow", 1)).unwrap(),
        ];
        let table = &render_report(&reports).unwrap().tables[0];
        assert_eq!(table.rows[0].1, vec![Some(0.5)]);
        assert_eq!(table.macro_f1[0].0, 0.5);
        assert!((table.macro_f1[0].1 - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(table.runs, vec![2]);
        assert!(table.to_text().contains("0.50 ± 0.71"));
    }

    #[test]
    fn empty_labels_render_without_error() {
        let r = F1Report {
            config: config("bow", 0),
            labels: vec![],
            macro_f1: 0.0,
        };
        let rendered = render_report(&[r]).unwrap();
        assert!(rendered.tables[0].rows.is_empty());
        let mut csv = Vec::new();
        rendered.tables[0].write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("label,bow\n"));
        assert!(matches!(render_report(&[]), Err(EvalError::NoReports)));
    }

    #[test]
    fn sweep_csv_and_curve() {
        let points: Vec<SweepPoint> = [(0.0, 0, 0.5), (0.5, 0, 0.7), (0.0, 1, 0.3), (0.5, 1, 0.9)]
            .iter()
            .map(|&(x, seed, f)| SweepPoint {
                taxonomy: TaxonomyKind::UserIntent,
                x: ContextWindow::from_f64(x).unwrap(),
                seed,
                macro_f1: f,
            })
            .collect();
        let curve = average_curve(&points, TaxonomyKind::UserIntent);
        assert_eq!(curve.len(), 2);
        assert!((curve[0].1 - 0.4).abs() < 1e-12 && (curve[1].1 - 0.8).abs() < 1e-12);
        assert!(average_curve(&points, TaxonomyKind::MusicalAttribute).is_empty());

        let mut buf = Vec::new();
        write_sweep_csv(&points, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("taxonomy,x,seed,macro_f1\nintent,0,0,0.5\nintent,0.5,0,0.7\n"));
    }
}
