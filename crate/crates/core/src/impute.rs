//! Median imputation with missing-value indicators, and one-hot encoding.
//!
//! A numeric column with missing cells becomes two design columns: the values
//! with missing cells replaced by a constant, and a 0/1 indicator of
//! missingness. The pair spans the same space (together with the intercept)
//! whatever the constant is, which is what makes node-wise and root-node
//! imputation interchangeable for ULDA splits.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnKind, Table};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputePolicy {
    /// Constants re-estimated from each node's rows.
    #[default]
    NodeWise,
    /// Constants copied from the root node.
    RootNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnRecord {
    Numeric {
        name: String,
        constant: f64,
        indicator: bool,
        /// Set when the fitting rows had no observed value and `constant`
        /// came from the root record.
        #[serde(default)]
        fallback: bool,
    },
    Categorical {
        name: String,
        levels: Vec<String>,
        missing_level: bool,
    },
}

impl ColumnRecord {
    pub fn name(&self) -> &str {
        match self {
            ColumnRecord::Numeric { name, .. } | ColumnRecord::Categorical { name, .. } => name,
        }
    }

    fn kind(&self) -> ColumnKind {
        match self {
            ColumnRecord::Numeric { .. } => ColumnKind::Numeric,
            ColumnRecord::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    fn width(&self) -> usize {
        match self {
            ColumnRecord::Numeric { indicator, .. } => 1 + usize::from(*indicator),
            ColumnRecord::Categorical {
                levels,
                missing_level,
                ..
            } => levels.len() + usize::from(*missing_level),
        }
    }
}

/// Everything needed to replay imputation and encoding on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationRecord {
    pub columns: Vec<ColumnRecord>,
}

impl ImputationRecord {
    /// Number of design-matrix columns this record produces.
    pub fn width(&self) -> usize {
        self.columns.iter().map(ColumnRecord::width).sum()
    }

    pub fn sources(&self) -> Vec<ColumnSource> {
        let mut out = Vec::with_capacity(self.width());
        for (c, rec) in self.columns.iter().enumerate() {
            match rec {
                ColumnRecord::Numeric { indicator, .. } => {
                    out.push(ColumnSource::Numeric { column: c });
                    if *indicator {
                        out.push(ColumnSource::Indicator { column: c });
                    }
                }
                ColumnRecord::Categorical {
                    levels,
                    missing_level,
                    ..
                } => {
                    out.extend((0..levels.len()).map(|l| ColumnSource::Dummy {
                        column: c,
                        level: Some(l as u32),
                    }));
                    if *missing_level {
                        out.push(ColumnSource::Dummy {
                            column: c,
                            level: None,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Where a design-matrix column came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSource {
    Numeric { column: usize },
    Indicator { column: usize },
    /// `level: None` is the synthetic missing level.
    Dummy { column: usize, level: Option<u32> },
}

/// Fully numeric design matrix for a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub values: DMatrix<f64>,
    pub sources: Vec<ColumnSource>,
    pub row_ids: Vec<usize>,
}

impl EncodedMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }
}

/// Median with even-sized samples averaged over the two middle values.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

pub fn fit_imputation(
    table: &Table,
    rows: &[usize],
    policy: ImputePolicy,
    root: Option<&ImputationRecord>,
) -> Result<ImputationRecord> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("imputation on zero rows".into()));
    }
    if let Some(root) = root {
        check_schema(table, root)?;
    }
    let mut columns = Vec::with_capacity(table.n_cols());
    for (c, (name, col)) in table.names.iter().zip(&table.columns).enumerate() {
        let any_missing = rows.iter().any(|&r| col.is_missing(r));
        let rec = match col {
            Column::Numeric(v) => {
                let root_constant = root.map(|rec| match &rec.columns[c] {
                    ColumnRecord::Numeric { constant, .. } => *constant,
                    ColumnRecord::Categorical { .. } => unreachable!("schema checked"),
                });
                let (constant, fallback) = match (policy, root_constant) {
                    (ImputePolicy::RootNode, Some(k)) => (k, false),
                    _ => {
                        let mut observed: Vec<f64> = rows.iter().filter_map(|&r| v[r]).collect();
                        match median(&mut observed) {
                            Some(m) => (m, false),
                            None => (root_constant.unwrap_or(0.0), true),
                        }
                    }
                };
                ColumnRecord::Numeric {
                    name: name.clone(),
                    constant,
                    indicator: any_missing,
                    fallback,
                }
            }
            Column::Categorical { levels, .. } => ColumnRecord::Categorical {
                name: name.clone(),
                levels: levels.clone(),
                missing_level: any_missing,
            },
        };
        columns.push(rec);
    }
    Ok(ImputationRecord { columns })
}

fn check_schema(table: &Table, rec: &ImputationRecord) -> Result<()> {
    if table.n_cols() != rec.columns.len() {
        return Err(Error::SchemaMismatch(format!(
            "expected {} columns, found {}",
            rec.columns.len(),
            table.n_cols()
        )));
    }
    for ((name, col), r) in table.names.iter().zip(&table.columns).zip(&rec.columns) {
        if name != r.name() {
            return Err(Error::SchemaMismatch(format!(
                "expected column `{}`, found `{name}`",
                r.name()
            )));
        }
        if col.kind() != r.kind() {
            return Err(Error::SchemaMismatch(format!(
                "column `{name}` is {:?}, expected {:?}",
                col.kind(),
                r.kind()
            )));
        }
    }
    Ok(())
}

/// Encodes `rows` of `table` with a fitted record.
///
/// Categorical cells are matched to the record's levels by name. A level the
/// record has never seen maps to the missing level when the record has one,
/// and to an all-zero block otherwise.
pub fn encode(table: &Table, rows: &[usize], rec: &ImputationRecord) -> Result<EncodedMatrix> {
    check_schema(table, rec)?;
    let n = rows.len();
    let width = rec.width();
    let mut values = DMatrix::<f64>::zeros(n, width);
    let mut out = 0;
    for (col, r) in table.columns.iter().zip(&rec.columns) {
        match (col, r) {
            (
                Column::Numeric(v),
                ColumnRecord::Numeric {
                    constant,
                    indicator,
                    ..
                },
            ) => {
                for (i, &row) in rows.iter().enumerate() {
                    values[(i, out)] = v[row].unwrap_or(*constant);
                }
                out += 1;
                if *indicator {
                    for (i, &row) in rows.iter().enumerate() {
                        if v[row].is_none() {
                            values[(i, out)] = 1.0;
                        }
                    }
                    out += 1;
                }
            }
            (
                Column::Categorical { levels, codes },
                ColumnRecord::Categorical {
                    levels: rec_levels,
                    missing_level,
                    ..
                },
            ) => {
                let lookup: HashMap<&str, usize> = rec_levels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.as_str(), i))
                    .collect();
                let missing_slot = missing_level.then_some(rec_levels.len());
                let slot_of_code: Vec<Option<usize>> = levels
                    .iter()
                    .map(|l| lookup.get(l.as_str()).copied().or(missing_slot))
                    .collect();
                for (i, &row) in rows.iter().enumerate() {
                    let slot = match codes[row] {
                        Some(code) => slot_of_code[code as usize],
                        None => missing_slot,
                    };
                    if let Some(s) = slot {
                        values[(i, out + s)] = 1.0;
                    }
                }
                out += rec_levels.len() + usize::from(*missing_level);
            }
            _ => unreachable!("schema checked"),
        }
    }
    debug_assert_eq!(out, width);
    Ok(EncodedMatrix {
        values,
        sources: rec.sources(),
        row_ids: rows.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_table(cells: Vec<Option<f64>>) -> Table {
        Table::new(vec!["x".into()], vec![Column::Numeric(cells)]).unwrap()
    }

    fn column(m: &EncodedMatrix, c: usize) -> Vec<f64> {
        m.values.column(c).iter().copied().collect()
    }

    #[test]
    fn node_wise_median_and_indicator() {
        let t = numeric_table(vec![Some(1.0), Some(2.0), None, Some(4.0)]);
        let rows = [0, 1, 2, 3];
        let rec = fit_imputation(&t, &rows, ImputePolicy::NodeWise, None).unwrap();
        assert_eq!(
            rec.columns[0],
            ColumnRecord::Numeric {
                name: "x".into(),
                constant: 2.0,
                indicator: true,
                fallback: false
            }
        );
        let m = encode(&t, &rows, &rec).unwrap();
        assert_eq!(column(&m, 0), [1.0, 2.0, 2.0, 4.0]);
        assert_eq!(column(&m, 1), [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            m.sources,
            [
                ColumnSource::Numeric { column: 0 },
                ColumnSource::Indicator { column: 0 }
            ]
        );
    }

    #[test]
    fn root_node_copies_constant() {
        let t = numeric_table(vec![Some(1.0), Some(2.0), None, Some(4.0)]);
        let root = ImputationRecord {
            columns: vec![ColumnRecord::Numeric {
                name: "x".into(),
                constant: 10.0,
                indicator: true,
                fallback: false,
            }],
        };
        let rec = fit_imputation(&t, &[0, 1, 2, 3], ImputePolicy::RootNode, Some(&root)).unwrap();
        let ColumnRecord::Numeric {
            constant, indicator, ..
        } = rec.columns[0]
        else {
            panic!()
        };
        assert_eq!((constant, indicator), (10.0, true));
    }

    #[test]
    fn complete_column_has_no_indicator() {
        let t = numeric_table(vec![Some(3.0), Some(-1.0), Some(0.5)]);
        let rec = fit_imputation(&t, &[0, 1, 2], ImputePolicy::NodeWise, None).unwrap();
        let m = encode(&t, &[0, 1, 2], &rec).unwrap();
        assert_eq!(m.n_cols(), 1);
        assert_eq!(column(&m, 0), [3.0, -1.0, 0.5]);
    }

    #[test]
    fn all_missing_in_node_falls_back_to_root() {
        let t = numeric_table(vec![None, None, Some(7.0)]);
        let root = fit_imputation(&t, &[0, 1, 2], ImputePolicy::NodeWise, None).unwrap();
        let rec = fit_imputation(&t, &[0, 1], ImputePolicy::NodeWise, Some(&root)).unwrap();
        assert_eq!(
            rec.columns[0],
            ColumnRecord::Numeric {
                name: "x".into(),
                constant: 7.0,
                indicator: true,
                fallback: true
            }
        );
    }

    #[test]
    fn categorical_gets_missing_level() {
        let col = Column::categorical_from_strings(&[Some("red"), None, Some("blue")]);
        let t = Table::new(vec!["c".into()], vec![col]).unwrap();
        let rec = fit_imputation(&t, &[0, 1, 2], ImputePolicy::NodeWise, None).unwrap();
        assert_eq!(
            rec.columns[0],
            ColumnRecord::Categorical {
                name: "c".into(),
                levels: vec!["blue".into(), "red".into()],
                missing_level: true
            }
        );
        let m = encode(&t, &[0, 1, 2], &rec).unwrap();
        // blue, red, <missing>
        assert_eq!(column(&m, 0), [0.0, 0.0, 1.0]);
        assert_eq!(column(&m, 1), [1.0, 0.0, 0.0]);
        assert_eq!(column(&m, 2), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let col = Column::categorical_from_strings(&[Some("a"), Some("b"), Some("b"), Some("a")]);
        let t = Table::new(vec!["c".into()], vec![col]).unwrap();
        let rows = [0, 1, 2, 3];
        let rec = fit_imputation(&t, &rows, ImputePolicy::NodeWise, None).unwrap();
        let m = encode(&t, &rows, &rec).unwrap();
        assert_eq!(m.n_cols(), 2);
        for r in 0..4 {
            assert_eq!(m.values.row(r).sum(), 1.0);
        }
    }

    #[test]
    fn unseen_level_routing() {
        let train = Column::categorical_from_strings(&[Some("a"), None, Some("b")]);
        let t = Table::new(vec!["c".into()], vec![train]).unwrap();
        let with_missing = fit_imputation(&t, &[0, 1, 2], ImputePolicy::NodeWise, None).unwrap();
        let without = fit_imputation(&t, &[0, 2], ImputePolicy::NodeWise, None).unwrap();

        let test_col = Column::categorical_from_strings(&[Some("zzz"), Some("a")]);
        let test = Table::new(vec!["c".into()], vec![test_col]).unwrap();
        let m = encode(&test, &[0, 1], &with_missing).unwrap();
        assert_eq!(m.values.row(0).iter().copied().collect::<Vec<_>>(), [0.0, 0.0, 1.0]);
        assert_eq!(m.values.row(1).iter().copied().collect::<Vec<_>>(), [1.0, 0.0, 0.0]);
        let m = encode(&test, &[0, 1], &without).unwrap();
        assert_eq!(m.values.row(0).iter().copied().collect::<Vec<_>>(), [0.0, 0.0]);
    }

    #[test]
    fn schema_mismatch() {
        let t = numeric_table(vec![Some(1.0)]);
        let rec = fit_imputation(&t, &[0], ImputePolicy::NodeWise, None).unwrap();
        let col = Column::categorical_from_strings(&[Some("a")]);
        let other = Table::new(vec!["x".into()], vec![col]).unwrap();
        assert!(matches!(
            encode(&other, &[0], &rec),
            Err(Error::SchemaMismatch(_))
        ));
        let two = Table::new(
            vec!["x".into(), "y".into()],
            vec![Column::Numeric(vec![Some(1.0)]), Column::Numeric(vec![Some(2.0)])],
        )
        .unwrap();
        assert!(encode(&two, &[0], &rec).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    proptest::proptest! {
        // Replaying a record on fully observed rows reproduces the raw values.
        #[test]
        fn complete_rows_encode_to_raw(vals in proptest::collection::vec(-1e6f64..1e6, 1..30)) {
            let mut cells: Vec<Option<f64>> = vals.iter().copied().map(Some).collect();
            cells.push(None);
            let t = numeric_table(cells);
            let all: Vec<usize> = (0..t.n_rows()).collect();
            let rec = fit_imputation(&t, &all, ImputePolicy::NodeWise, None).unwrap();
            let observed: Vec<usize> = (0..vals.len()).collect();
            let m = encode(&t, &observed, &rec).unwrap();
            proptest::prop_assert_eq!(column(&m, 0), vals);
            proptest::prop_assert!(column(&m, 1).iter().all(|&x| x == 0.0));
        }
    }
}
