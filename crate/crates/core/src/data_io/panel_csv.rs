use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{PanelSeries, SiteSeries};

/// Writes `site_id,year,y,n,<covariates...>`, presample rows first with empty
/// covariate cells. Floats use the shortest representation that round-trips.
pub fn write_panel<W: Write>(panel: &PanelSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let m = panel.n_covariates();
    let mut header = vec!["site_id".to_string(), "year".into(), "y".into(), "n".into()];
    header.extend(panel.covariate_names().iter().cloned());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(4 + m);
    for site in panel.sites() {
        for (i, year) in panel.presample_years().iter().enumerate() {
            record.clear();
            record.extend([
                site.id.clone(),
                year.to_string(),
                site.presample_y[i].to_string(),
                site.presample_n[i].to_string(),
            ]);
            record.extend(std::iter::repeat_n(String::new(), m));
            w.write_record(&record)?;
        }
        for (t, year) in panel.years().iter().enumerate() {
            record.clear();
            record.extend([site.id.clone(), year.to_string(), site.y[t].to_string(), site.n[t].to_string()]);
            record.extend(site.x_row(t, m).iter().map(f64::to_string));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One site's rows from a panel CSV, sorted by year.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSite {
    pub id: String,
    pub years: Vec<i32>,
    pub y: Vec<f64>,
    pub n: Vec<u32>,
    /// Per row, one optional value per table column.
    pub covariates: Vec<Vec<Option<f64>>>,
}

/// A parsed panel CSV before a window and columns are chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTable {
    pub columns: Vec<String>,
    pub sites: Vec<TableSite>,
}

/// A single parsed row.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub site_id: String,
    pub year: i32,
    pub y: f64,
    pub n: u32,
    pub covariates: Vec<Option<f64>>,
}

pub fn read_panel_table<R: Read>(reader: R) -> Result<PanelTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected = ["site_id", "year", "y", "n"];
    if header.len() < 4 || header.iter().take(4).ne(expected) {
        return Err(Error::data(format!(
            "panel CSV header must start with site_id,year,y,n; got {:?}",
            header.iter().take(4).collect::<Vec<_>>()
        )));
    }
    let columns: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<PanelRow>> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = parse_row(&rec, &columns).map_err(|e| Error::data(format!("row {}: {e}", line + 2)))?;
        if !rows.contains_key(&row.site_id) {
            order.push(row.site_id.clone());
        }
        rows.entry(row.site_id.clone()).or_default().push(row);
    }
    let mut sites = Vec::with_capacity(order.len());
    for id in order {
        let mut site_rows = rows.remove(&id).unwrap_or_default();
        site_rows.sort_by_key(|r| r.year);
        if let Some(w) = site_rows.windows(2).find(|w| w[0].year == w[1].year) {
            return Err(Error::data(format!("site {id}: duplicate year {}", w[0].year)));
        }
        let mut site = TableSite { id, years: vec![], y: vec![], n: vec![], covariates: vec![] };
        for r in site_rows {
            site.years.push(r.year);
            site.y.push(r.y);
            site.n.push(r.n);
            site.covariates.push(r.covariates);
        }
        sites.push(site);
    }
    if sites.is_empty() {
        return Err(Error::dim("panel CSV has no rows"));
    }
    Ok(PanelTable { columns, sites })
}

fn parse_row(rec: &csv::StringRecord, columns: &[String]) -> std::result::Result<PanelRow, String> {
    let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
    let year = field(1).parse().map_err(|_| format!("bad year {:?}", field(1)))?;
    let y = field(2).parse().map_err(|_| format!("bad y {:?}", field(2)))?;
    let n = field(3).parse().map_err(|_| format!("bad n {:?}", field(3)))?;
    let covariates = columns
        .iter()
        .enumerate()
        .map(|(i, c)| match field(4 + i) {
            "" => Ok(None),
            s => s.parse().map(Some).map_err(|_| format!("bad value {s:?} in column {c}")),
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(PanelRow { site_id: field(0).to_string(), year, y, n, covariates })
}

impl PanelTable {
    /// Resolves a column expression: an exact column name, or factors joined
    /// by `:` whose product is taken.
    fn resolve(&self, expr: &str) -> Result<Vec<usize>> {
        let find = |name: &str| self.columns.iter().position(|c| c == name);
        if let Some(i) = find(expr) {
            return Ok(vec![i]);
        }
        expr.split(':')
            .map(|f| find(f.trim()).ok_or_else(|| Error::config(format!("unknown column {:?} in {expr:?}", f.trim()))))
            .collect()
    }

    /// Common year axis shared by all sites.
    pub fn years(&self) -> &[i32] {
        &self.sites[0].years
    }

    /// Builds a panel whose fit window is `window` (default: all years after
    /// the first `p`), with the `p` preceding years as presample.
    pub fn to_panel(&self, p: usize, window: Option<(i32, i32)>, columns: Option<&[String]>) -> Result<PanelSeries> {
        let exprs: Vec<String> = match columns {
            Some(c) => c.to_vec(),
            None => self.columns.clone(),
        };
        let resolved = exprs.iter().map(|e| self.resolve(e)).collect::<Result<Vec<_>>>()?;
        let (start, end) = match window {
            Some(w) => w,
            None => {
                let years = self.years();
                (years[0] + p as i32, *years.last().unwrap_or(&years[0]))
            }
        };
        if start > end {
            return Err(Error::config(format!("window: empty fit window {start}..={end}")));
        }
        let presample_years: Vec<i32> = (start - p as i32..start).collect();
        let fit_years: Vec<i32> = (start..=end).collect();
        let m = exprs.len();
        let mut sites = Vec::with_capacity(self.sites.len());
        for site in &self.sites {
            let row_of = |year: i32| {
                site.years
                    .binary_search(&year)
                    .map_err(|_| Error::dim(format!("site {}: year {year} is missing from the panel", site.id)))
            };
            let mut s = SiteSeries {
                id: site.id.clone(),
                y: Vec::with_capacity(fit_years.len()),
                n: Vec::with_capacity(fit_years.len()),
                x: Vec::with_capacity(fit_years.len() * m),
                presample_y: Vec::with_capacity(p),
                presample_n: Vec::with_capacity(p),
            };
            for &year in &presample_years {
                let r = row_of(year)?;
                s.presample_y.push(site.y[r]);
                s.presample_n.push(site.n[r]);
            }
            for &year in &fit_years {
                let r = row_of(year)?;
                s.y.push(site.y[r]);
                s.n.push(site.n[r]);
                for idx in &resolved {
                    let mut v = 1.0;
                    for &i in idx {
                        v *= site.covariates[r][i].ok_or_else(|| {
                            Error::data(format!(
                                "missing covariate cell (site {}, year {year}, column {})",
                                site.id, self.columns[i]
                            ))
                        })?;
                    }
                    s.x.push(v);
                }
            }
            sites.push(s);
        }
        PanelSeries::new(sites, fit_years, presample_years, exprs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::random_instance;

    #[test]
    fn round_trip_is_exact() {
        for seed in 0..10 {
            let (panel, _) = random_instance(seed, 3, 12, 2, 4);
            let mut buf = Vec::new();
            write_panel(&panel, &mut buf).unwrap();
            let table = read_panel_table(buf.as_slice()).unwrap();
            let back = table.to_panel(panel.order(), None, None).unwrap();
            assert_eq!(back, panel);
        }
    }

    #[test]
    fn product_columns_and_window() {
        let csv = "site_id,year,y,n,a,b\n\
                   s,2000,1.5,2,,\n\
                   s,2001,2.5,1,2,3\n\
                   s,2002,3.5,3,4,0.5\n";
        let table = read_panel_table(csv.as_bytes()).unwrap();
        let p = table.to_panel(1, Some((2002, 2002)), Some(&["a:b".to_string(), "b".to_string()])).unwrap();
        assert_eq!(p.presample_years(), &[2001]);
        assert_eq!(p.sites()[0].x, vec![2.0, 0.5]);
        assert_eq!(p.sites()[0].presample_y, vec![2.5]);
        assert!(table.to_panel(1, None, Some(&["c".to_string()])).is_err());
        // The presample year 2000 has no covariates, but they are not needed.
        assert!(table.to_panel(1, None, None).is_ok());
        assert!(table.to_panel(0, None, None).is_err());
    }

    #[test]
    fn header_and_duplicates() {
        assert!(read_panel_table("site,year,y,n\n".as_bytes()).is_err());
        let dup = "site_id,year,y,n\ns,2000,1,1\ns,2000,2,1\n";
        assert!(read_panel_table(dup.as_bytes()).is_err());
    }
}
