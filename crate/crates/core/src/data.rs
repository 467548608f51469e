//! Longitudinal and survival datasets and their CSV formats.
//!
//! Longitudinal CSV: `id,time,y,<covariates...>`, one row per measurement.
//! Survival CSV: `id,T,delta,<baseline covariates...>`, one row per subject.
//! Covariate columns whose values all parse as numbers are numeric; anything
//! else (region labels, say) is kept as text.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Label(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Label(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            Column::Label(_) => None,
        }
    }

    /// Values as region labels; integral numbers print without a fraction.
    pub fn labels(&self) -> Vec<String> {
        match self {
            Column::Label(v) => v.clone(),
            Column::Numeric(v) => v.iter().map(|x| format_number(*x)).collect(),
        }
    }

    /// Cell `i` as it would appear in a CSV file.
    pub fn cell(&self, i: usize) -> String {
        match self {
            Column::Numeric(v) => format_number(v[i]),
            Column::Label(v) => v[i].clone(),
        }
    }

    pub fn select(&self, idx: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(idx.iter().map(|&i| v[i]).collect()),
            Column::Label(v) => Column::Label(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    fn from_cells(cells: Vec<String>) -> Column {
        let parsed: Option<Vec<f64>> = cells.iter().map(|c| c.trim().parse::<f64>().ok()).collect();
        match parsed {
            Some(v) => Column::Numeric(v),
            None => Column::Label(cells),
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(x: f64) -> String {
    format!("{x}")
}

/// Named covariate columns, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Covariates {
    columns: Vec<(String, Column)>,
}

impl Covariates {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, column: Column) {
        let name = name.into();
        if let Some(slot) = self.columns.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = column;
        } else {
            self.columns.push((name, column));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.columns.iter().map(|(n, c)| (n.as_str(), c))
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Covariates {
        Covariates {
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), c.select(idx)))
                .collect(),
        }
    }
}

/// Event or censoring time and event indicator per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    pub id: Vec<i64>,
    pub time: Vec<f64>,
    pub delta: Vec<u8>,
    pub covariates: Covariates,
}

impl SurvivalDataset {
    pub fn new(id: Vec<i64>, time: Vec<f64>, delta: Vec<u8>, covariates: Covariates) -> Result<Self> {
        let n = id.len();
        if time.len() != n || delta.len() != n || covariates.iter().any(|(_, c)| c.len() != n) {
            return Err(Error::InvalidInput("survival columns have different lengths".into()));
        }
        if let Some(i) = time.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "subject {} has non-positive time {}",
                id[i], time[i]
            )));
        }
        if let Some(i) = delta.iter().position(|&d| d > 1) {
            return Err(Error::InvalidInput(format!(
                "subject {} has event indicator {} (must be 0 or 1)",
                id[i], delta[i]
            )));
        }
        let mut sorted = id.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("subject {} appears twice", w[0])));
        }
        Ok(SurvivalDataset {
            id,
            time,
            delta,
            covariates,
        })
    }

    pub fn len(&self) -> usize {
        self.id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id.is_empty()
    }

    pub fn index_of(&self, id: i64) -> Option<usize> {
        self.id.iter().position(|&i| i == id)
    }

    pub fn max_time(&self) -> f64 {
        self.time.iter().cloned().fold(0.0, f64::max)
    }

    pub fn events(&self) -> usize {
        self.delta.iter().map(|&d| d as usize).sum()
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let table = read_table(&path)?;
        let id = table.numeric_col(&path, "id")?;
        let time = table.numeric_col(&path, "T")?;
        let delta = table.numeric_col(&path, "delta")?;
        let id = to_ids(&path, &id)?;
        let delta = delta
            .iter()
            .map(|&d| {
                if d == 0.0 || d == 1.0 {
                    Ok(d as u8)
                } else {
                    Err(Error::csv(&path, format!("delta value {d} is not 0 or 1")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let covariates = table.rest(&["id", "T", "delta"]);
        Self::new(id, time, delta, covariates)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut header = vec!["id".to_string(), "T".into(), "delta".into()];
        header.extend(self.covariates.names().map(String::from));
        let rows = (0..self.len()).map(|i| {
            let mut row = vec![
                self.id[i].to_string(),
                format_number(self.time[i]),
                self.delta[i].to_string(),
            ];
            row.extend(self.covariates.iter().map(|(_, c)| c.cell(i)));
            row
        });
        write_table(path, &header, rows)
    }
}

/// Repeated measurements: subject id, time, outcome and covariates per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    pub id: Vec<i64>,
    pub time: Vec<f64>,
    pub y: Vec<f64>,
    pub covariates: Covariates,
}

impl LongitudinalDataset {
    pub fn new(id: Vec<i64>, time: Vec<f64>, y: Vec<f64>, covariates: Covariates) -> Result<Self> {
        let n = id.len();
        if time.len() != n || y.len() != n || covariates.iter().any(|(_, c)| c.len() != n) {
            return Err(Error::InvalidInput(
                "longitudinal columns have different lengths".into(),
            ));
        }
        if let Some(i) = time.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidInput(format!(
                "row {i} has invalid observation time {}",
                time[i]
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("row {i} has non-finite outcome")));
        }
        Ok(LongitudinalDataset {
            id,
            time,
            y,
            covariates,
        })
    }

    pub fn len(&self) -> usize {
        self.id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id.is_empty()
    }

    /// Check the cross-dataset invariants: every row belongs to a known
    /// subject, lies within `[0, T_i]`, and every subject has a row.
    pub fn check_against(&self, surv: &SurvivalDataset) -> Result<()> {
        let mut has_row = vec![false; surv.len()];
        for (r, (&id, &t)) in self.id.iter().zip(&self.time).enumerate() {
            let i = surv.index_of(id).ok_or_else(|| {
                Error::InvalidInput(format!("longitudinal row {r} has unknown subject {id}"))
            })?;
            if t > surv.time[i] + 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "subject {id} is observed at {t} after its event/censoring time {}",
                    surv.time[i]
                )));
            }
            has_row[i] = true;
        }
        if let Some(i) = has_row.iter().position(|h| !h) {
            return Err(Error::InvalidInput(format!(
                "subject {} has no longitudinal rows",
                surv.id[i]
            )));
        }
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let table = read_table(&path)?;
        let id = to_ids(&path, &table.numeric_col(&path, "id")?)?;
        let time = table.numeric_col(&path, "time")?;
        let y = table.numeric_col(&path, "y")?;
        let covariates = table.rest(&["id", "time", "y"]);
        Self::new(id, time, y, covariates)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut header = vec!["id".to_string(), "time".into(), "y".into()];
        header.extend(self.covariates.names().map(String::from));
        let rows = (0..self.len()).map(|i| {
            let mut row = vec![
                self.id[i].to_string(),
                format_number(self.time[i]),
                format_number(self.y[i]),
            ];
            row.extend(self.covariates.iter().map(|(_, c)| c.cell(i)));
            row
        });
        write_table(path, &header, rows)
    }
}

fn to_ids(path: impl AsRef<Path>, v: &[f64]) -> Result<Vec<i64>> {
    v.iter()
        .map(|&x| {
            if x.fract() == 0.0 && x.is_finite() {
                Ok(x as i64)
            } else {
                Err(Error::csv(&path, format!("id {x} is not an integer")))
            }
        })
        .collect()
}

/// A CSV file held column-wise.
#[derive(Debug, Clone)]
pub(crate) struct Table {
    pub headers: Vec<String>,
    pub cells: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&Vec<String>> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| &self.cells[i])
    }

    pub fn numeric_col(&self, path: impl AsRef<Path>, name: &str) -> Result<Vec<f64>> {
        let col = self
            .column(name)
            .ok_or_else(|| Error::csv(&path, format!("missing column {name}")))?;
        col.iter()
            .enumerate()
            .map(|(r, c)| {
                c.trim().parse::<f64>().map_err(|_| {
                    Error::csv(&path, format!("row {}: column {name} value {c:?} is not a number", r + 1))
                })
            })
            .collect()
    }

    pub fn rest(&self, skip: &[&str]) -> Covariates {
        let mut cov = Covariates::new();
        for (h, cells) in self.headers.iter().zip(&self.cells) {
            if !skip.contains(&h.as_str()) {
                cov.push(h.clone(), Column::from_cells(cells.clone()));
            }
        }
        cov
    }
}

pub(crate) fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(&path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut cells = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(&path, e))?;
        for (i, field) in record.iter().enumerate() {
            cells[i].push(field.to_string());
        }
    }
    Ok(Table { headers, cells })
}

pub(crate) fn write_table<I>(path: impl AsRef<Path>, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(header).map_err(|e| Error::csv(&path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
