//! Asset log-price panels and the spreads built on top of them.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{MrpError, Result};
use crate::scalar::Scalar;

/// How the numbers in a price file are to be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceScale {
    /// Raw prices; natural logs are taken on load.
    Raw,
    /// Already natural-log prices; passed through unchanged.
    Log,
}

/// A `T x M` panel of asset log-prices, rows ascending in time.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPriceMatrix<T: Scalar> {
    values: DMatrix<T>,
    asset_names: Vec<String>,
}

impl<T: Scalar> LogPriceMatrix<T> {
    pub fn new(values: DMatrix<T>, asset_names: Vec<String>) -> Result<Self> {
        let (t, m) = values.shape();
        if t < 2 || m < 2 {
            return Err(MrpError::Invalid(format!(
                "log-price panel must be at least 2x2, got {t}x{m}"
            )));
        }
        if asset_names.len() != m {
            return Err(MrpError::Dimension(format!(
                "{} asset names for {m} columns",
                asset_names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MrpError::Invalid(format!(
                "non-finite log-price at row {}, column {}",
                pos % t + 1,
                pos / t + 1
            )));
        }
        Ok(Self {
            values,
            asset_names,
        })
    }

    /// Builds a panel with generated names `A1..AM`.
    pub fn from_values(values: DMatrix<T>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|i| format!("A{i}")).collect();
        Self::new(values, names)
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }

    pub fn load_csv(path: impl AsRef<Path>, scale: PriceScale) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| MrpError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, scale)
    }

    /// Parses a header row of asset names followed by one row per time step.
    /// Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(reader: R, scale: PriceScale) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header_err = |e: csv::Error| MrpError::Parse {
            row: 0,
            column: 0,
            message: format!("unreadable header: {e}"),
        };
        let names: Vec<String> = rdr
            .headers()
            .map_err(header_err)?
            .iter()
            .map(str::to_owned)
            .collect();
        let m = names.len();
        if m < 2 {
            return Err(MrpError::Parse {
                row: 0,
                column: m,
                message: "need at least 2 asset columns".into(),
            });
        }

        let mut data: Vec<T> = Vec::new();
        let mut rows = 0usize;
        for (idx, record) in rdr.records().enumerate() {
            let row = idx + 1;
            let record = record.map_err(|e| MrpError::Parse {
                row,
                column: 0,
                message: e.to_string(),
            })?;
            if record.len() != m {
                return Err(MrpError::Parse {
                    row,
                    column: record.len().min(m) + 1,
                    message: format!("expected {m} fields, found {}", record.len()),
                });
            }
            for (j, field) in record.iter().enumerate() {
                let column = j + 1;
                if field.is_empty() {
                    return Err(MrpError::Parse {
                        row,
                        column,
                        message: "missing value".into(),
                    });
                }
                let v: f64 = field.parse().map_err(|_| MrpError::Parse {
                    row,
                    column,
                    message: format!("non-numeric field {field:?}"),
                })?;
                let v = match scale {
                    PriceScale::Log => v,
                    PriceScale::Raw if v > 0.0 => v.ln(),
                    PriceScale::Raw => {
                        return Err(MrpError::Parse {
                            row,
                            column,
                            message: format!("raw price {v} is not positive"),
                        })
                    }
                };
                if !v.is_finite() {
                    return Err(MrpError::Parse {
                        row,
                        column,
                        message: "non-finite value".into(),
                    });
                }
                data.push(T::lit(v));
            }
            rows += 1;
        }
        if rows < 2 {
            return Err(MrpError::Parse {
                row: rows,
                column: 0,
                message: format!("need at least 2 data rows, found {rows}"),
            });
        }
        Self::new(DMatrix::from_row_slice(rows, m, &data), names)
    }

    /// Writes the panel as log-prices with full round-trip precision.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let to_io = |e: csv::Error| MrpError::Invalid(format!("csv write failed: {e}"));
        wtr.write_record(&self.asset_names).map_err(to_io)?;
        for row in self.values.row_iter() {
            wtr.write_record(row.iter().map(|v| v.as_f64().to_string()))
                .map_err(to_io)?;
        }
        wtr.flush().map_err(|e| MrpError::Invalid(e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| MrpError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// A `T x N` panel of spread log-prices together with the `N x M` hedge matrix
/// that maps asset log-prices to spreads.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadPanel<T: Scalar> {
    values: DMatrix<T>,
    hedge: DMatrix<T>,
}

impl<T: Scalar> SpreadPanel<T> {
    /// Wraps an existing spread series; `hedge` must have one row per spread column.
    pub fn from_parts(values: DMatrix<T>, hedge: DMatrix<T>) -> Result<Self> {
        if values.ncols() != hedge.nrows() {
            return Err(MrpError::Dimension(format!(
                "{} spread columns but {} hedge rows",
                values.ncols(),
                hedge.nrows()
            )));
        }
        check_hedge_rows(&hedge)?;
        Ok(Self { values, hedge })
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn hedge(&self) -> &DMatrix<T> {
        &self.hedge
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_spreads(&self) -> usize {
        self.values.ncols()
    }

    /// Time slice `[range.start, range.end)` sharing the same hedge matrix.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.n_samples() {
            return Err(MrpError::Dimension(format!(
                "time range {range:?} outside 0..{}",
                self.n_samples()
            )));
        }
        let values = self.values.rows(range.start, range.len()).into_owned();
        Ok(Self {
            values,
            hedge: self.hedge.clone(),
        })
    }

    /// The portfolio spread `z_t = w' s_t`.
    pub fn combine(&self, w: &DVector<T>) -> Result<DVector<T>> {
        if w.len() != self.n_spreads() {
            return Err(MrpError::Dimension(format!(
                "weight length {} vs {} spreads",
                w.len(),
                self.n_spreads()
            )));
        }
        Ok(&self.values * w)
    }
}

fn check_hedge_rows<T: Scalar>(hedge: &DMatrix<T>) -> Result<()> {
    for (n, row) in hedge.row_iter().enumerate() {
        if row.iter().all(|v| v.is_zero()) {
            return Err(MrpError::Invalid(format!(
                "hedge row {} is all zero",
                n + 1
            )));
        }
    }
    Ok(())
}

/// Forms `s_t = hedge * y_t` for every time step.
pub fn make_spreads<T: Scalar>(
    prices: &LogPriceMatrix<T>,
    hedge: &DMatrix<T>,
) -> Result<SpreadPanel<T>> {
    if hedge.ncols() != prices.n_assets() {
        return Err(MrpError::Dimension(format!(
            "hedge has {} columns but panel has {} assets",
            hedge.ncols(),
            prices.n_assets()
        )));
    }
    check_hedge_rows(hedge)?;
    let values = prices.values() * hedge.transpose();
    Ok(SpreadPanel {
        values,
        hedge: hedge.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn parse(text: &str, scale: PriceScale) -> Result<LogPriceMatrix<f64>> {
        LogPriceMatrix::read_csv(text.as_bytes(), scale)
    }

    #[test]
    fn raw_prices_are_logged() {
        let text = format!("a,b\n1,{E}\n{E},{}\n{},{}\n", E * E, E * E, E * E * E);
        let m = parse(&text, PriceScale::Raw).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 2.0, 2.0, 3.0]);
        assert!((m.values() - expected).amax() < 1e-12);
        assert_eq!(m.asset_names(), ["a", "b"]);
    }

    #[test]
    fn log_prices_pass_through() {
        let m = parse("x,y\n0.5,-1.25\n0.75,2\n", PriceScale::Log).unwrap();
        assert_eq!(
            m.values(),
            &DMatrix::from_row_slice(2, 2, &[0.5, -1.25, 0.75, 2.0])
        );
    }

    #[test]
    fn comment_lines_skipped() {
        let m = parse("# seed=3\nx,y\n0.5,1\n# mid\n0.75,2\n", PriceScale::Log).unwrap();
        assert_eq!(m.asset_names(), ["x", "y"]);
        assert_eq!(m.n_samples(), 2);
    }

    #[test]
    fn blank_cell_names_row() {
        let text = "a,b\n1,2\n1,2\n1,2\n1,2\n1,\n1,2\n";
        match parse(text, PriceScale::Log) {
            Err(MrpError::Parse { row, column, .. }) => {
                assert_eq!((row, column), (5, 2));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_short_files_rejected() {
        assert!(matches!(
            parse("a,b\n1,x\n2,3\n", PriceScale::Log),
            Err(MrpError::Parse {
                row: 1,
                column: 2,
                ..
            })
        ));
        assert!(matches!(
            parse("a,b\n1,2\n", PriceScale::Log),
            Err(MrpError::Parse { .. })
        ));
        assert!(matches!(
            parse("a,b\n1,2\n3\n", PriceScale::Log),
            Err(MrpError::Parse { row: 2, .. })
        ));
        assert!(matches!(
            parse("a,b\n1,2\n-3,4\n", PriceScale::Raw),
            Err(MrpError::Parse {
                row: 2,
                column: 1,
                ..
            })
        ));
    }

    #[test]
    fn identity_hedge_reproduces_prices() {
        let y = DMatrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let prices = LogPriceMatrix::from_values(y.clone()).unwrap();
        let s = make_spreads(&prices, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.values(), &y);
    }

    #[test]
    fn pair_spread_by_substitution() {
        let prices =
            LogPriceMatrix::from_values(DMatrix::from_row_slice(2, 2, &[2.0f64, 0.5, 1.0, 1.0]))
                .unwrap();
        let hedge = DMatrix::from_row_slice(1, 2, &[1.0f64, -1.0]);
        let s = make_spreads(&prices, &hedge).unwrap();
        assert!((s.values()[(0, 0)] - 1.5).abs() < 1e-15);
        assert!(s.values()[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn hedge_validation() {
        let prices = LogPriceMatrix::from_values(DMatrix::<f64>::zeros(3, 2)).unwrap();
        assert!(matches!(
            make_spreads(&prices, &DMatrix::zeros(1, 3)),
            Err(MrpError::Dimension(_))
        ));
        assert!(matches!(
            make_spreads(&prices, &DMatrix::zeros(1, 2)),
            Err(MrpError::Invalid(_))
        ));
    }

    #[test]
    fn panel_shape_rules() {
        assert!(LogPriceMatrix::<f64>::from_values(DMatrix::zeros(1, 3)).is_err());
        assert!(LogPriceMatrix::<f64>::from_values(DMatrix::zeros(3, 1)).is_err());
        let mut v = DMatrix::<f64>::zeros(3, 2);
        v[(1, 1)] = f64::NAN;
        assert!(LogPriceMatrix::from_values(v).is_err());
    }
}
