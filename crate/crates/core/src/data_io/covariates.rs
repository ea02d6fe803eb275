use std::collections::BTreeMap;
use std::io::Read;

use crate::error::{Error, Result};

/// Site-year covariates read from `site_id,year,<columns...>`; an empty cell
/// is a missing value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariateTable {
    columns: Vec<String>,
    rows: BTreeMap<(String, i32), Vec<Option<f64>>>,
}

impl CovariateTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: BTreeMap::new() }
    }

    pub fn insert(&mut self, site_id: &str, year: i32, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::dim(format!(
                "site {site_id} year {year}: {} values for {} columns",
                values.len(),
                self.columns.len()
            )));
        }
        if self.rows.insert((site_id.to_string(), year), values).is_some() {
            return Err(Error::data(format!("site {site_id} year {year}: duplicate covariate row")));
        }
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "site_id" || &header[1] != "year" {
            return Err(Error::data("covariate CSV must start with columns site_id,year"));
        }
        let mut table = Self::new(header.iter().skip(2).map(str::to_string).collect());
        for rec in rdr.records() {
            let rec = rec?;
            let site = rec[0].to_string();
            let year: i32 =
                rec[1].trim().parse().map_err(|_| Error::data(format!("site {site}: bad year {:?}", &rec[1])))?;
            let values = rec
                .iter()
                .skip(2)
                .zip(&table.columns)
                .map(|(cell, col)| {
                    let cell = cell.trim();
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse().map(Some).map_err(|_| {
                            Error::data(format!("site {site} year {year} column {col}: bad number {cell:?}"))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            table.insert(&site, year, values)?;
        }
        Ok(table)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// `None` if the row or the cell is absent.
    pub fn get(&self, site_id: &str, year: i32, column: usize) -> Option<f64> {
        self.rows.get(&(site_id.to_string(), year)).and_then(|r| r[column])
    }
}
