//! Column-typed tables, CSV loading, and stratified partitioning.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokens treated as missing when no override is given.
pub const DEFAULT_NA_TOKENS: [&str; 3] = ["", "NA", "?"];

pub fn default_na_tokens() -> HashSet<String> {
    DEFAULT_NA_TOKENS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    /// `codes` index into `levels`, which is sorted lexicographically.
    Categorical {
        levels: Vec<String>,
        codes: Vec<Option<u32>>,
    },
}

impl Column {
    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_none(),
            Column::Categorical { codes, .. } => codes[row].is_none(),
        }
    }

    /// Builds a categorical column from raw strings, sorting the level table.
    pub fn categorical_from_strings<S: AsRef<str>>(cells: &[Option<S>]) -> Column {
        let levels: Vec<String> = cells
            .iter()
            .flatten()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, u32> = levels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i as u32))
            .collect();
        let codes = cells
            .iter()
            .map(|c| c.as_ref().map(|s| index[s.as_ref()]))
            .collect();
        Column::Categorical { levels, codes }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical { levels, codes } => Column::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
        }
    }

    fn cell_string(&self, row: usize) -> Option<String> {
        match self {
            Column::Numeric(v) => v[row].map(|x| x.to_string()),
            Column::Categorical { levels, codes } => codes[row].map(|c| levels[c as usize].clone()),
        }
    }
}

/// Feature columns without a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    n_rows: usize,
}

impl Table {
    pub fn new(names: Vec<String>, columns: Vec<Column>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                found: columns.len(),
            });
        }
        let n_rows = columns.first().map_or(0, Column::len);
        if let Some(bad) = columns.iter().position(|c| c.len() != n_rows) {
            return Err(Error::SchemaMismatch(format!(
                "column `{}` has {} rows, expected {n_rows}",
                names[bad],
                columns[bad].len()
            )));
        }
        Ok(Table {
            names,
            columns,
            n_rows,
        })
    }

    /// Dense numeric table with no missing cells, columns named `x1..xp`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let mut cols = vec![Vec::with_capacity(rows.len()); p];
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            for (c, &x) in cols.iter_mut().zip(row) {
                c.push(Some(x));
            }
        }
        let names = (1..=p).map(|i| format!("x{i}")).collect();
        let mut t = Table::new(names, cols.into_iter().map(Column::Numeric).collect())?;
        t.n_rows = rows.len();
        Ok(t)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn schema(&self) -> Vec<(String, ColumnKind)> {
        self.names
            .iter()
            .cloned()
            .zip(self.columns.iter().map(Column::kind))
            .collect()
    }

    pub fn select(&self, rows: &[usize]) -> Table {
        Table {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    pub fn has_missing(&self) -> bool {
        self.columns
            .iter()
            .any(|c| (0..self.n_rows).any(|r| c.is_missing(r)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Table,
    pub target_name: String,
    /// Class index per row, into `classes`.
    pub target: Vec<usize>,
    pub classes: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Table,
        target_name: impl Into<String>,
        target: Vec<usize>,
        classes: Vec<String>,
    ) -> Result<Self> {
        if target.len() != features.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: features.n_rows(),
                found: target.len(),
            });
        }
        if classes.len() < 2 {
            return Err(Error::TooFewClasses(classes.len()));
        }
        if let Some(&bad) = target.iter().find(|&&t| t >= classes.len()) {
            return Err(Error::InvalidArgument(format!(
                "class index {bad} outside label table of size {}",
                classes.len()
            )));
        }
        Ok(Dataset {
            features,
            target_name: target_name.into(),
            target,
            classes,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &r in rows {
            counts[self.target[r]] += 1;
        }
        counts
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).collect()
    }

    /// Row subset; keeps the full class label table.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(rows),
            target_name: self.target_name.clone(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            classes: self.classes.clone(),
        }
    }
}

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn na_cell<'a>(row: &'a [String], c: usize, na_tokens: &HashSet<String>) -> Option<&'a str> {
    let s = row[c].as_str();
    (!na_tokens.contains(s)).then_some(s)
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn infer_column<'a>(cells: impl Iterator<Item = Option<&'a str>> + Clone) -> Column {
    if cells.clone().flatten().all(|s| parse_finite(s).is_some()) {
        Column::Numeric(cells.map(|c| c.map(|s| parse_finite(s).unwrap())).collect())
    } else {
        let owned: Vec<Option<&str>> = cells.collect();
        Column::categorical_from_strings(&owned)
    }
}

/// Loads a CSV with a header row. A column is numeric iff every non-missing
/// cell parses as a finite real; otherwise it is categorical.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_name: &str,
    na_tokens: &HashSet<String>,
) -> Result<Dataset> {
    let (header, rows) = read_records(path.as_ref())?;
    let target_idx = header
        .iter()
        .position(|h| h == target_name)
        .ok_or_else(|| Error::MissingColumn(target_name.to_string()))?;
    let cell = |row, c| na_cell(row, c, na_tokens);

    let mut labels = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        match cell(row, target_idx) {
            Some(s) => labels.push(s),
            None => {
                return Err(Error::MissingTarget {
                    column: target_name.to_string(),
                    row: i,
                })
            }
        }
    }
    let classes: Vec<String> = labels
        .iter()
        .map(|s| s.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::TooFewClasses(classes.len()));
    }
    let target = labels
        .iter()
        .map(|s| classes.binary_search_by(|c| c.as_str().cmp(s)).unwrap())
        .collect();

    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if c == target_idx {
            continue;
        }
        names.push(name.clone());
        columns.push(infer_column(rows.iter().map(|r| cell(r, c))));
    }
    let mut features = Table::new(names, columns)?;
    features.n_rows = rows.len();
    Dataset::new(features, target_name, target, classes)
}

/// Loads feature columns named by `schema`, coercing each to its recorded
/// kind. Columns not in the schema are ignored. Returns the table and, when
/// the file carries `target_name`, the raw target labels.
pub fn load_csv_with_schema(
    path: impl AsRef<Path>,
    schema: &[(String, ColumnKind)],
    target_name: Option<&str>,
    na_tokens: &HashSet<String>,
) -> Result<(Table, Option<Vec<Option<String>>>)> {
    let (header, rows) = read_records(path.as_ref())?;
    let cell = |row: &Vec<String>, c: usize| -> Option<String> {
        let s = row[c].as_str();
        (!na_tokens.contains(s)).then(|| s.to_string())
    };
    let mut names = Vec::with_capacity(schema.len());
    let mut columns = Vec::with_capacity(schema.len());
    for (name, kind) in schema {
        let c = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("column `{name}` not found")))?;
        let cells: Vec<Option<String>> = rows.iter().map(|r| cell(r, c)).collect();
        let col = match kind {
            ColumnKind::Numeric => {
                let mut vals = Vec::with_capacity(cells.len());
                for (i, s) in cells.iter().enumerate() {
                    vals.push(match s {
                        None => None,
                        Some(s) => Some(parse_finite(s).ok_or_else(|| {
                            Error::SchemaMismatch(format!(
                                "column `{name}` is numeric but row {i} holds `{s}`"
                            ))
                        })?),
                    });
                }
                Column::Numeric(vals)
            }
            ColumnKind::Categorical => Column::categorical_from_strings(&cells),
        };
        names.push(name.clone());
        columns.push(col);
    }
    let target = target_name
        .and_then(|t| header.iter().position(|h| h == t))
        .map(|c| rows.iter().map(|r| cell(r, c)).collect());
    let mut table = Table::new(names, columns)?;
    table.n_rows = rows.len();
    Ok((table, target))
}

/// Writes features then the target column; missing cells become `NA`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = ds.features.names.clone();
    header.push(ds.target_name.clone());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for r in 0..ds.n_rows() {
        rec.clear();
        for col in &ds.features.columns {
            rec.push(col.cell_string(r).unwrap_or_else(|| "NA".to_string()));
        }
        rec.push(ds.classes[ds.target[r]].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn rows_by_class(ds: &Dataset, rows: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); ds.n_classes()];
    for &r in rows {
        by_class[ds.target[r]].push(r);
    }
    for g in &mut by_class {
        g.shuffle(rng);
    }
    by_class
}

/// Stratified train/test partition. Returned datasets keep the parent's class
/// label table and list rows in their original order.
pub fn split_train_test(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_rows(ds, fraction, seed)?;
    Ok((ds.select(&train), ds.select(&test)))
}

/// Row-id form of [`split_train_test`].
pub fn split_rows(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = rows_by_class(ds, &ds.all_rows(), &mut rng);
    // Largest-remainder apportionment of the overall train count.
    let target_total = (fraction * ds.n_rows() as f64).round() as usize;
    let exact: Vec<f64> = groups.iter().map(|g| fraction * g.len() as f64).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = target_total.saturating_sub(take.iter().sum());
    for &c in &order {
        if left == 0 {
            break;
        }
        if exact[c] > exact[c].floor() {
            take[c] += 1;
            left -= 1;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (group, mut k) in groups.iter().zip(take) {
        let n = group.len();
        if n >= 2 {
            k = k.clamp(1, n - 1);
        }
        train.extend_from_slice(&group[..k.min(n)]);
        test.extend_from_slice(&group[k.min(n)..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    for (part, rows) in [("train", &train), ("test", &test)] {
        let present = ds.class_counts(rows).iter().filter(|&&c| c > 0).count();
        if present < 2 {
            return Err(Error::InvalidArgument(format!(
                "{part} partition would hold {present} class(es)"
            )));
        }
    }
    Ok((train, test))
}

/// Stratified assignment of rows to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Positions (into the planned row list) held out in fold `f`.
    pub fn test_positions(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == f)
            .collect()
    }

    pub fn train_positions(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != f)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

pub fn make_folds(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    make_folds_for_rows(ds, &ds.all_rows(), k, seed)
}

/// Folds over a subset of rows; `assignment[i]` belongs to `rows[i]`.
///
/// Classes are dealt round-robin with a running offset so fold sizes differ
/// by at most one.
pub fn make_folds_for_rows(ds: &Dataset, rows: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count {k} < 2")));
    }
    if k > rows.len() {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} exceeds {} rows",
            rows.len()
        )));
    }
    let position: BTreeMap<usize, usize> = rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; rows.len()];
    let mut next = 0;
    for group in rows_by_class(ds, rows, &mut rng) {
        for r in group {
            assignment[position[&r]] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignment,
        seed,
    })
}
