//! File formats.
//!
//! CSV is the primary interchange format and every CSV schema has a JSON
//! mirror (an array of records with the same field names). The format is
//! chosen from the file extension. Numbers are written with 17 significant
//! digits so that values round-trip exactly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSystem;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::MethodForecasts;
use crate::panel::{ForecastEntry, ForecastPanel};

/// Output encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// `{:.16e}`: 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path)
        .map_err(|e| Error::Schema(format!("cannot open `{}`: {e}", path.display())))
}

/// Reads an array of records from a `.json` file or a headed CSV file.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = open(path)?;
    if is_json(path) {
        return Ok(serde_json::from_reader(std::io::BufReader::new(file))?);
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ConstraintFile {
    Aggregation {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        upper: Vec<String>,
        bottom: Vec<String>,
    },
    General {
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
        vars: Vec<String>,
    },
}

fn dense(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<Matrix> {
    if let Some(r) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Schema(format!(
            "row {r} of {what} has {} entries, expected {ncols}",
            rows[r].len()
        )));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

/// Reads a constraint system.
///
/// JSON takes either `{"A": [[..]], "upper": [..], "bottom": [..]}` (an
/// aggregation matrix) or `{"C": [[..]], "vars": [..]}` (any full-row-rank
/// zero-constraints matrix). CSV holds the general form: a header row of
/// variable names and one row of coefficients per constraint. Variables of
/// a general system are reordered so that the free ones come last.
pub fn read_constraints(path: &Path) -> Result<ConstraintSystem> {
    if is_json(path) {
        let spec: ConstraintFile = serde_json::from_reader(std::io::BufReader::new(open(path)?))?;
        return match spec {
            ConstraintFile::Aggregation { a, upper, bottom } => {
                if a.len() != upper.len() {
                    return Err(Error::Schema(format!(
                        "aggregation matrix has {} rows for {} upper series",
                        a.len(),
                        upper.len()
                    )));
                }
                let a = dense(&a, bottom.len(), "A")?;
                ConstraintSystem::from_aggregation(a, upper.into_iter().chain(bottom).collect())
            }
            ConstraintFile::General { c, vars } => {
                let c = dense(&c, vars.len(), "C")?;
                Ok(ConstraintSystem::from_general_constraints(&c, vars)?.0)
            }
        };
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let vars: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| Error::Schema(format!("bad coefficient `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let c = dense(&rows, vars.len(), "the constraint table")?;
    Ok(ConstraintSystem::from_general_constraints(&c, vars)?.0)
}

/// One base forecast: `series,expert,horizon,value` (horizon optional).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRecord {
    pub series: String,
    pub expert: String,
    #[serde(default)]
    pub horizon: Option<u32>,
    pub value: f64,
}

/// Base forecasts grouped by horizon (ascending). Files without a horizon
/// column give a single group with `None`.
pub fn read_panel(path: &Path) -> Result<Vec<(Option<u32>, Vec<ForecastEntry>)>> {
    let records: Vec<PanelRecord> = read_records(path)?;
    if records.is_empty() {
        return Err(Error::Schema(format!("`{}` holds no forecasts", path.display())));
    }
    let mut groups: BTreeMap<Option<u32>, Vec<ForecastEntry>> = BTreeMap::new();
    for r in records {
        groups.entry(r.horizon).or_default().push(ForecastEntry::new(&r.series, &r.expert, r.value));
    }
    if groups.len() > 1 && groups.contains_key(&None) {
        return Err(Error::Schema("horizon is given for some forecasts but not all".into()));
    }
    Ok(groups.into_iter().collect())
}

/// One in-sample residual (actual minus fitted): `t,series,expert,value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub t: usize,
    pub series: String,
    pub expert: String,
    pub value: f64,
}

/// Arranges residual records into the `m x T` matrix matching `panel`.
/// Every forecast cell needs a residual at every `t` in `0..T`.
pub fn residual_matrix(panel: &ForecastPanel, records: &[ResidualRecord]) -> Result<Matrix> {
    let t_len = records.iter().map(|r| r.t + 1).max().unwrap_or(0);
    let series: HashMap<&str, usize> =
        panel.series().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let experts: HashMap<&str, usize> =
        panel.experts().iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
    let position: HashMap<(usize, usize), usize> =
        panel.cells().iter().enumerate().map(|(k, &c)| (c, k)).collect();
    let mut out = Matrix::from_element(panel.m(), t_len, f64::NAN);
    for r in records {
        let i = *series.get(r.series.as_str()).ok_or_else(|| Error::UnknownLabel(r.series.clone()))?;
        let j = *experts.get(r.expert.as_str()).ok_or_else(|| {
            Error::Schema(format!("residuals for expert `{}`, who has no base forecast", r.expert))
        })?;
        let k = *position.get(&(i, j)).ok_or_else(|| {
            Error::Schema(format!(
                "residuals for `{}` by `{}`, which has no base forecast",
                r.series, r.expert
            ))
        })?;
        if !out[(k, r.t)].is_nan() {
            return Err(Error::Schema(format!(
                "duplicate residual for `{}` by `{}` at t={}",
                r.series, r.expert, r.t
            )));
        }
        out[(k, r.t)] = r.value;
    }
    for k in 0..panel.m() {
        if let Some(t) = (0..t_len).find(|&t| out[(k, t)].is_nan()) {
            let (i, j) = panel.cells()[k];
            return Err(Error::MissingResidual {
                series: panel.series()[i].clone(),
                expert: panel.experts()[j].clone(),
                t,
            });
        }
    }
    if t_len < 2 {
        return Err(Error::InsufficientData(format!(
            "{t_len} residual observations, at least 2 are needed"
        )));
    }
    Ok(out)
}

/// Actual value for evaluation: `series,horizon,index,value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActualRecord {
    pub series: String,
    pub horizon: u32,
    pub index: i64,
    pub value: f64,
}

/// Forecast for evaluation: `method,series,horizon,index,value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub method: String,
    pub series: String,
    pub horizon: u32,
    pub index: i64,
    pub value: f64,
}

/// Aligned evaluation data.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationData {
    /// Series in order of first appearance in the actuals.
    pub series: Vec<String>,
    pub horizons: Vec<u32>,
    /// Test indices of each horizon, ascending.
    pub indices: Vec<Vec<i64>>,
    /// `Q_h x n` per horizon.
    pub actuals: Vec<Matrix>,
    /// Methods in order of first appearance.
    pub forecasts: Vec<MethodForecasts>,
}

/// Aligns actuals and forecasts, keeping the horizons in `horizons`
/// (all horizons present in the actuals when `None`). Every method must
/// forecast every (series, horizon, index) cell of the actuals.
pub fn align_evaluation(
    actuals: &[ActualRecord],
    forecasts: &[ForecastRecord],
    horizons: Option<&[u32]>,
) -> Result<EvaluationData> {
    let mut series: Vec<String> = Vec::new();
    let mut series_index: HashMap<String, usize> = HashMap::new();
    for a in actuals {
        if !series_index.contains_key(&a.series) {
            series_index.insert(a.series.clone(), series.len());
            series.push(a.series.clone());
        }
    }
    let present: BTreeSet<u32> = actuals.iter().map(|a| a.horizon).collect();
    let horizons: Vec<u32> = match horizons {
        Some(hs) => {
            if let Some(h) = hs.iter().find(|h| !present.contains(h)) {
                return Err(Error::Schema(format!("no actuals at horizon {h}")));
            }
            hs.to_vec()
        }
        None => present.into_iter().collect(),
    };
    if horizons.is_empty() {
        return Err(Error::InsufficientData("no horizons to evaluate".into()));
    }
    let n = series.len();

    let mut indices = Vec::with_capacity(horizons.len());
    let mut cell: HashMap<(u32, i64), usize> = HashMap::new();
    for &h in &horizons {
        let idx: Vec<i64> = actuals
            .iter()
            .filter(|a| a.horizon == h)
            .map(|a| a.index)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for (q, &i) in idx.iter().enumerate() {
            cell.insert((h, i), q);
        }
        indices.push(idx);
    }
    let h_pos: HashMap<u32, usize> = horizons.iter().enumerate().map(|(k, &h)| (h, k)).collect();

    let fill = |values: &mut [Matrix], seen: &mut [Vec<bool>], s: &str, h: u32, index: i64, v: f64, owner: &str| -> Result<()> {
        let Some(&k) = h_pos.get(&h) else { return Ok(()) };
        let i = *series_index.get(s).ok_or_else(|| Error::UnknownLabel(s.to_string()))?;
        let q = *cell.get(&(h, index)).ok_or_else(|| {
            Error::Schema(format!("{owner}: no actual for horizon {h}, index {index}"))
        })?;
        let slot = q * n + i;
        if seen[k][slot] {
            return Err(Error::Schema(format!(
                "{owner}: duplicate value for `{s}`, horizon {h}, index {index}"
            )));
        }
        seen[k][slot] = true;
        values[k][(q, i)] = v;
        Ok(())
    };
    let blank = || -> (Vec<Matrix>, Vec<Vec<bool>>) {
        (
            indices.iter().map(|idx| Matrix::zeros(idx.len(), n)).collect(),
            indices.iter().map(|idx| vec![false; idx.len() * n]).collect(),
        )
    };
    let complete = |seen: &[Vec<bool>], owner: &str| -> Result<()> {
        for (k, s) in seen.iter().enumerate() {
            if let Some(slot) = s.iter().position(|&b| !b) {
                return Err(Error::Schema(format!(
                    "{owner}: missing `{}` at horizon {}, index {}",
                    series[slot % n],
                    horizons[k],
                    indices[k][slot / n]
                )));
            }
        }
        Ok(())
    };

    let (mut act, mut seen) = blank();
    for a in actuals {
        fill(&mut act, &mut seen, &a.series, a.horizon, a.index, a.value, "actuals")?;
    }
    complete(&seen, "actuals")?;

    let mut methods: Vec<String> = Vec::new();
    for f in forecasts {
        if !methods.contains(&f.method) {
            methods.push(f.method.clone());
        }
    }
    let mut out = Vec::with_capacity(methods.len());
    for m in &methods {
        let (mut vals, mut seen) = blank();
        for f in forecasts.iter().filter(|f| &f.method == m) {
            fill(&mut vals, &mut seen, &f.series, f.horizon, f.index, f.value, m)?;
        }
        complete(&seen, m)?;
        out.push(MethodForecasts {
            method: m.clone(),
            by_horizon: vals,
        });
    }
    Ok(EvaluationData {
        series,
        horizons,
        indices,
        actuals: act,
        forecasts: out,
    })
}

/// A rectangular text table that renders as CSV or as a JSON array of
/// objects. Numeric cells are stored pre-formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Num(f64),
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.header)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(|c| match c {
                        Cell::Text(s) => s.clone(),
                        Cell::Int(i) => i.to_string(),
                        Cell::Num(x) => fmt_num(*x),
                    }))?;
                }
                w.into_inner().map_err(|e| Error::Io(e.into_error()))
            }
            Format::Json => {
                let rows: Vec<serde_json::Map<String, serde_json::Value>> = self
                    .rows
                    .iter()
                    .map(|row| {
                        self.header
                            .iter()
                            .zip(row)
                            .map(|(h, c)| {
                                let v = match c {
                                    Cell::Text(s) => serde_json::Value::from(s.as_str()),
                                    Cell::Int(i) => serde_json::Value::from(*i),
                                    Cell::Num(x) => serde_json::Value::from(*x),
                                };
                                (h.clone(), v)
                            })
                            .collect()
                    })
                    .collect();
                let mut out = serde_json::to_vec_pretty(&rows)?;
                out.push(b'\n');
                Ok(out)
            }
        }
    }
}

/// Square matrix with row and column labels.
pub fn matrix_table(corner: &str, rows: &[String], cols: &[String], m: &Matrix) -> Table {
    let mut header = vec![corner];
    header.extend(cols.iter().map(String::as_str));
    let mut t = Table::new(&header);
    for (r, label) in rows.iter().enumerate() {
        let mut row = vec![Cell::Text(label.clone())];
        row.extend((0..m.ncols()).map(|c| Cell::Num(m[(r, c)])));
        t.push(row);
    }
    t
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// that is renamed into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Run description written next to every output as
/// `<output>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'a str,
    pub version: &'a str,
    pub command: &'a str,
    pub seed: Option<u64>,
    pub config: &'a C,
}

pub fn manifest_path(output: &Path) -> std::path::PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    name.into()
}

pub fn write_manifest<C: Serialize>(output: &Path, manifest: &Manifest<'_, C>) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    write_atomic(&manifest_path(output), &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
    }

    #[test]
    fn constraint_forms_agree() {
        let dir = tempfile::tempdir().unwrap();
        let agg = write(dir.path(), "a.json", r#"{"A": [[1, 1]], "upper": ["y1"], "bottom": ["y2", "y3"]}"#);
        let gen = write(dir.path(), "c.json", r#"{"C": [[1, -1, -1]], "vars": ["y1", "y2", "y3"]}"#);
        let csv = write(dir.path(), "c.csv", "y1,y2,y3\n1,-1,-1\n");
        let a = read_constraints(&agg).unwrap();
        for other in [read_constraints(&gen).unwrap(), read_constraints(&csv).unwrap()] {
            assert_eq!(other.labels(), a.labels());
            assert_eq!(other.aggregation(), a.aggregation());
        }
    }

    #[test]
    fn panel_with_and_without_horizon() {
        let dir = tempfile::tempdir().unwrap();
        let flat = write(dir.path(), "p.csv", "series,expert,value\ny1,e1,1.5\ny2,e1,2\n");
        let groups = read_panel(&flat).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].0, None);
        assert_eq!(groups[0].1[0], ForecastEntry::new("y1", "e1", 1.5));

        let multi = write(dir.path(), "p.json", r#"[
            {"series": "y1", "expert": "e1", "horizon": 2, "value": 1.0},
            {"series": "y1", "expert": "e1", "horizon": 1, "value": 3.0}]"#);
        let groups = read_panel(&multi).unwrap();
        assert_eq!(groups.iter().map(|g| g.0).collect::<Vec<_>>(), vec![Some(1), Some(2)]);
        assert_eq!(groups[0].1[0].value, 3.0);

        let mixed = write(dir.path(), "m.csv", "series,expert,horizon,value\ny1,e1,1,1\ny1,e1,,2\n");
        assert!(matches!(read_panel(&mixed), Err(Error::Schema(_))));
    }

    #[test]
    fn residuals_follow_panel_order() {
        let sys = ConstraintSystem::unconstrained(vec!["a".into(), "b".into()]).unwrap();
        let panel = ForecastPanel::build(
            &[ForecastEntry::new("b", "e2", 0.0), ForecastEntry::new("a", "e1", 0.0), ForecastEntry::new("b", "e1", 0.0)],
            &sys,
        )
        .unwrap();
        let mut recs = Vec::new();
        for t in 0..3 {
            for (s, e, base) in [("a", "e1", 10.0), ("b", "e1", 20.0), ("b", "e2", 30.0)] {
                recs.push(ResidualRecord { t, series: s.into(), expert: e.into(), value: base + t as f64 });
            }
        }
        let r = residual_matrix(&panel, &recs).unwrap();
        // experts by first appearance: e2 then e1
        assert_eq!(r.row(0).iter().copied().collect::<Vec<_>>(), vec![30.0, 31.0, 32.0]);
        assert_eq!(r.row(1).iter().copied().collect::<Vec<_>>(), vec![10.0, 11.0, 12.0]);
        recs.pop();
        assert!(matches!(residual_matrix(&panel, &recs), Err(Error::MissingResidual { .. })));
    }

    #[test]
    fn evaluation_alignment() {
        let actuals: Vec<ActualRecord> = (0..3)
            .flat_map(|i| {
                ["x", "y"].into_iter().map(move |s| ActualRecord { series: s.into(), horizon: 1, index: 2 - i, value: i as f64 })
            })
            .collect();
        let fc: Vec<ForecastRecord> = actuals
            .iter()
            .map(|a| ForecastRecord { method: "m".into(), series: a.series.clone(), horizon: 1, index: a.index, value: a.value + 1.0 })
            .collect();
        let d = align_evaluation(&actuals, &fc, None).unwrap();
        assert_eq!(d.indices, vec![vec![0, 1, 2]]);
        assert_eq!(d.actuals[0][(0, 1)], 2.0);
        assert_eq!(d.forecasts[0].by_horizon[0][(0, 1)], 3.0);
        assert!(align_evaluation(&actuals, &fc[1..], None).is_err());
        assert!(align_evaluation(&actuals, &fc, Some(&[2])).is_err());
    }

    #[test]
    fn tables_render_both_formats() {
        let mut t = Table::new(&["series", "value"]);
        t.push(vec![Cell::Text("y1".into()), Cell::Num(0.5)]);
        let csv = String::from_utf8(t.render(Format::Csv).unwrap()).unwrap();
        assert_eq!(csv, "series,value\ny1,5.0000000000000000e-1\n");
        let json: serde_json::Value = serde_json::from_slice(&t.render(Format::Json).unwrap()).unwrap();
        assert_eq!(json[0]["value"], 0.5);
    }

    #[test]
    fn atomic_write_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o.csv");
        write_atomic(&out, b"a\n").unwrap();
        write_atomic(&out, b"b\n").unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), b"b\n");
        let m = Manifest { tool: "t", version: "0", command: "c", seed: Some(1), config: &vec![1, 2] };
        write_manifest(&out, &m).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(manifest_path(&out)).unwrap()).unwrap();
        assert_eq!(v["seed"], 1);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
