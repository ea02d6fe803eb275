use serde::{Deserialize, Serialize};

use super::covariates::CovariateTable;
use super::rings::{AggregatedPanel, SiteYear};
use crate::error::{Error, Result};
use crate::model::{PanelSeries, SiteSeries};

const MAX_LISTED: usize = 20;

/// Which covariates to build and how many presample years to hold back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    /// Base names; the table must hold `{name}_{season}` columns.
    pub climate: Vec<String>,
    pub seasons: Vec<String>,
    pub include_previous: bool,
    pub defoliation_column: String,
    pub defoliation_lags: u32,
    /// Adds `defol_lag1 × c` for every climate column `c`.
    pub interactions: bool,
    pub p: usize,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            climate: vec![],
            seasons: vec!["spring".into(), "summer".into()],
            include_previous: true,
            defoliation_column: "defoliation".into(),
            defoliation_lags: 5,
            interactions: false,
            p: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moisture {
    Precipitation,
    Cmi,
}

/// Classifies a covariate name as a precipitation or CMI measure by prefix.
pub fn moisture_kind(name: &str) -> Option<Moisture> {
    let lower = name.to_ascii_lowercase();
    if ["prcp", "precip", "ppt", "pcp", "rain"].iter().any(|p| lower.starts_with(p)) {
        Some(Moisture::Precipitation)
    } else if lower.starts_with("cmi") {
        Some(Moisture::Cmi)
    } else {
        None
    }
}

/// Rejects specs that use both a precipitation and a CMI variable.
pub fn check_moisture<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut precip = None;
    let mut cmi = None;
    for n in names {
        match moisture_kind(n) {
            Some(Moisture::Precipitation) => precip = precip.or(Some(n)),
            Some(Moisture::Cmi) => cmi = cmi.or(Some(n)),
            None => {}
        }
    }
    if let (Some(p), Some(c)) = (precip, cmi) {
        return Err(Error::config(format!(
            "only one of precipitation and CMI may appear in a model (got {p} and {c})"
        )));
    }
    Ok(())
}

/// One raw covariate value at year `t − lag`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnTerm {
    pub column: String,
    pub lag: u32,
}

/// A design column is the product of its terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub name: String,
    pub terms: Vec<ColumnTerm>,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        check_moisture(self.climate.iter().map(String::as_str))?;
        if !self.climate.is_empty() && self.seasons.is_empty() {
            return Err(Error::config("seasons: at least one season is required"));
        }
        if self.interactions && self.defoliation_lags == 0 {
            return Err(Error::config("interactions: need defoliation_lags >= 1"));
        }
        Ok(())
    }

    /// Column order: per variable current seasons then previous seasons,
    /// then defoliation lags, then interactions.
    pub fn columns(&self) -> Vec<DesignColumn> {
        let mut climate = Vec::new();
        for var in &self.climate {
            let lags: &[u32] = if self.include_previous { &[0, 1] } else { &[0] };
            for &lag in lags {
                for season in &self.seasons {
                    let source = format!("{var}_{season}");
                    let name = if lag == 0 { source.clone() } else { format!("{source}_prev") };
                    climate.push(DesignColumn { name, terms: vec![ColumnTerm { column: source, lag }] });
                }
            }
        }
        let defol: Vec<DesignColumn> = (1..=self.defoliation_lags)
            .map(|j| DesignColumn {
                name: format!("defol_lag{j}"),
                terms: vec![ColumnTerm { column: self.defoliation_column.clone(), lag: j }],
            })
            .collect();
        let mut out = climate.clone();
        out.extend(defol.iter().cloned());
        if self.interactions {
            for c in &climate {
                let mut terms = defol[0].terms.clone();
                terms.extend(c.terms.iter().cloned());
                out.push(DesignColumn { name: format!("{}:{}", defol[0].name, c.name), terms });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSite {
    pub site_id: String,
    pub missing_years: Vec<i32>,
}

/// Record of how a design was assembled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignManifest {
    pub spec: DesignSpec,
    pub columns: Vec<DesignColumn>,
    pub window: (i32, i32),
    pub presample_years: Vec<i32>,
    pub fit_years: Vec<i32>,
    pub sites: Vec<String>,
    pub dropped_sites: Vec<DroppedSite>,
    pub exclusions: Vec<SiteYear>,
}

#[derive(Debug, Clone)]
pub struct DesignedPanel {
    pub panel: PanelSeries,
    pub manifest: DesignManifest,
}

/// Builds the lagged design over the aggregation window; its first `p` years
/// become the presample. Sites with gaps in the window are dropped.
/// Missing defoliation counts as level 0; any other missing cell is an error.
pub fn build_design(agg: &AggregatedPanel, covariates: &CovariateTable, spec: &DesignSpec) -> Result<DesignedPanel> {
    spec.validate()?;
    let columns = spec.columns();
    let mut index = Vec::with_capacity(columns.len());
    for col in &columns {
        let idx = col
            .terms
            .iter()
            .map(|t| {
                covariates
                    .column_index(&t.column)
                    .ok_or_else(|| Error::config(format!("covariate column {} not found", t.column)))
            })
            .collect::<Result<Vec<_>>>()?;
        index.push(idx);
    }

    let (start, end) = agg.window;
    let all_years: Vec<i32> = (start..=end).collect();
    if all_years.len() <= spec.p {
        return Err(Error::config(format!(
            "p: window {start}..={end} leaves no years after a presample of {}",
            spec.p
        )));
    }
    let (presample_years, fit_years) = all_years.split_at(spec.p);

    let mut dropped = Vec::new();
    let mut kept = Vec::new();
    for site in &agg.sites {
        if site.years == all_years {
            kept.push(site);
        } else {
            let missing = all_years.iter().copied().filter(|y| !site.years.contains(y)).collect();
            log::info!("dropping site {} with gaps in {start}..={end}", site.site_id);
            dropped.push(DroppedSite { site_id: site.site_id.clone(), missing_years: missing });
        }
    }
    if kept.is_empty() {
        return Err(Error::dim(format!("no site has complete data in {start}..={end}")));
    }

    let m = columns.len();
    let mut missing = Vec::new();
    let mut sites = Vec::with_capacity(kept.len());
    for site in kept {
        let mut x = Vec::with_capacity(fit_years.len() * m);
        for &year in fit_years {
            for (col, idx) in columns.iter().zip(&index) {
                let mut value = 1.0;
                for (term, &ci) in col.terms.iter().zip(idx) {
                    let at = year - term.lag as i32;
                    let cell = covariates.get(&site.site_id, at, ci);
                    let v = if term.column == spec.defoliation_column {
                        defoliation_level(&site.site_id, at, cell)?
                    } else {
                        match cell {
                            Some(v) => v,
                            None => {
                                missing.push(format!("({}, {at}, {})", site.site_id, term.column));
                                f64::NAN
                            }
                        }
                    };
                    value *= v;
                }
                x.push(value);
            }
        }
        sites.push(SiteSeries {
            id: site.site_id.clone(),
            y: site.y[spec.p..].to_vec(),
            n: site.n[spec.p..].to_vec(),
            x,
            presample_y: site.y[..spec.p].to_vec(),
            presample_n: site.n[..spec.p].to_vec(),
        });
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        let total = missing.len();
        let mut msg = missing[..total.min(MAX_LISTED)].join(", ");
        if total > MAX_LISTED {
            msg.push_str(&format!(" and {} more", total - MAX_LISTED));
        }
        return Err(Error::data(format!("missing covariate cells (site, year, column): {msg}")));
    }

    let names = columns.iter().map(|c| c.name.clone()).collect();
    let panel = PanelSeries::new(sites, fit_years.to_vec(), presample_years.to_vec(), names)?;
    let manifest = DesignManifest {
        spec: spec.clone(),
        columns,
        window: agg.window,
        presample_years: presample_years.to_vec(),
        fit_years: fit_years.to_vec(),
        sites: panel.site_ids(),
        dropped_sites: dropped,
        exclusions: agg.exclusions.clone(),
    };
    Ok(DesignedPanel { panel, manifest })
}

fn defoliation_level(site: &str, year: i32, cell: Option<f64>) -> Result<f64> {
    match cell {
        None => Ok(0.0),
        Some(v) if v.fract() == 0.0 && (0.0..=3.0).contains(&v) => Ok(v),
        Some(v) => {
            Err(Error::data(format!("site {site} year {year}: defoliation level must be an integer in 0..=3, got {v}")))
        }
    }
}
