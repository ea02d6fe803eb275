use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ring widths of one tree, oldest ring first.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTreeSeries {
    pub site_id: String,
    pub tree_id: String,
    pub years: Vec<i32>,
    pub ring_width_mm: Vec<f64>,
}

impl RawTreeSeries {
    pub fn new(site_id: String, tree_id: String, years: Vec<i32>, ring_width_mm: Vec<f64>) -> Result<Self> {
        if years.len() != ring_width_mm.len() {
            return Err(Error::dim(format!("tree {tree_id}: years and widths differ in length")));
        }
        if years.is_empty() {
            return Err(Error::data(format!("tree {tree_id}: no rings")));
        }
        if let Some(w) = years.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::data(format!(
                "tree {tree_id}: years must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { site_id, tree_id, years, ring_width_mm })
    }

    pub fn first_year(&self) -> i32 {
        self.years[0]
    }

    /// Ring count from the earliest ring up to and including `year`.
    pub fn age_at(&self, year: i32) -> Option<u32> {
        (year >= self.first_year()).then(|| (year - self.first_year() + 1) as u32)
    }
}

/// Basal-area increments in cm²: `π(r_t² − r_{t−1}²)` with the radius
/// accumulated from the earliest ring (mm → cm).
pub fn ring_width_to_bai(series: &RawTreeSeries) -> Result<Vec<f64>> {
    let mut radius = 0.0;
    let mut out = Vec::with_capacity(series.ring_width_mm.len());
    for (year, w) in series.years.iter().zip(&series.ring_width_mm) {
        if !(w.is_finite() && *w > 0.0) {
            return Err(Error::data(format!("tree {} year {year}: ring width must be > 0, got {w}", series.tree_id)));
        }
        let next = radius + w / 10.0;
        // (r1 − r0)(r1 + r0) avoids cancellation for thin outer rings.
        out.push(PI * (next - radius) * (next + radius));
        radius = next;
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct RingRecord {
    site_id: String,
    tree_id: String,
    year: i32,
    ring_width_mm: f64,
}

/// Reads `site_id,tree_id,year,ring_width_mm` rows, grouped by tree.
pub fn read_rings<R: Read>(reader: R) -> Result<Vec<RawTreeSeries>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut trees: BTreeMap<(String, String), Vec<(i32, f64)>> = BTreeMap::new();
    for rec in rdr.deserialize() {
        let rec: RingRecord = rec?;
        trees.entry((rec.site_id, rec.tree_id)).or_default().push((rec.year, rec.ring_width_mm));
    }
    trees
        .into_iter()
        .map(|((site, tree), mut rings)| {
            rings.sort_by_key(|r| r.0);
            if let Some(w) = rings.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::data(format!("tree {tree}: duplicate year {}", w[0].0)));
            }
            let (years, widths) = rings.into_iter().unzip();
            RawTreeSeries::new(site, tree, years, widths)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteYear {
    pub site_id: String,
    pub year: i32,
    pub reason: String,
}

/// Sum `Y` and count `n` of BAI for one site; only years with `n ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteAggregate {
    pub site_id: String,
    pub years: Vec<i32>,
    pub y: Vec<f64>,
    pub n: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedPanel {
    pub window: (i32, i32),
    pub sites: Vec<SiteAggregate>,
    /// Site-years inside the window with no contributing tree.
    pub exclusions: Vec<SiteYear>,
}

/// Per-site totals of tree BAI over `window` (inclusive).
///
/// BAI is computed on each tree's full series before windowing.
pub fn aggregate_panel(trees: &[RawTreeSeries], window: (i32, i32)) -> Result<AggregatedPanel> {
    let (start, end) = window;
    if start > end {
        return Err(Error::config(format!("window start {start} is after end {end}")));
    }
    let span = (end - start + 1) as usize;
    let mut by_site: BTreeMap<&str, (Vec<f64>, Vec<u32>)> = BTreeMap::new();
    for tree in trees {
        let bai = ring_width_to_bai(tree)?;
        let (y, n) = by_site.entry(tree.site_id.as_str()).or_insert_with(|| (vec![0.0; span], vec![0; span]));
        for (year, b) in tree.years.iter().zip(bai) {
            if (start..=end).contains(year) {
                let i = (year - start) as usize;
                y[i] += b;
                n[i] += 1;
            }
        }
    }
    let mut sites = Vec::new();
    let mut exclusions = Vec::new();
    for (site, (y, n)) in by_site {
        if n.iter().all(|c| *c == 0) {
            return Err(Error::dim(format!("site {site} has no trees in {start}..={end}")));
        }
        let mut agg = SiteAggregate { site_id: site.to_string(), years: vec![], y: vec![], n: vec![] };
        for i in 0..span {
            let year = start + i as i32;
            if n[i] == 0 {
                exclusions.push(SiteYear { site_id: site.to_string(), year, reason: "no sampled trees".into() });
            } else {
                agg.years.push(year);
                agg.y.push(y[i]);
                agg.n.push(n[i]);
            }
        }
        sites.push(agg);
    }
    Ok(AggregatedPanel { window, sites, exclusions })
}
