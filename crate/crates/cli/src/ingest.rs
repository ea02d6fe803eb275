use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use randsum::data_io::{
    aggregate_panel, build_design, read_rings, split_age_classes, write_panel, CovariateTable, DesignManifest,
    DesignSpec, RawTreeSeries, DEFAULT_AGE_BREAKS,
};
use serde::Serialize;

use crate::{create, manifest_path, open, write_json, EXIT_OK};

#[derive(Debug, Clone, Default)]
pub struct IngestArgs {
    pub rings: PathBuf,
    pub covariates: PathBuf,
    pub out: PathBuf,
    /// 1-based age class; all trees when absent.
    pub age_class: Option<usize>,
    pub design: Option<PathBuf>,
    pub start: Option<i32>,
    pub end: Option<i32>,
}

#[derive(Debug, Serialize)]
struct AgeClassInfo {
    class: usize,
    breaks: Vec<u32>,
    reference_year: i32,
    trees: usize,
    excluded_trees: Vec<(String, String)>,
}

#[derive(Debug, Serialize)]
struct IngestManifest {
    #[serde(flatten)]
    design: DesignManifest,
    trees: usize,
    age_class: Option<AgeClassInfo>,
}

/// Years covered by every site: latest site start to earliest site end.
fn common_window(trees: &[RawTreeSeries]) -> Option<(i32, i32)> {
    let mut spans: std::collections::BTreeMap<&str, (i32, i32)> = Default::default();
    for t in trees {
        let (a, b) = (t.first_year(), *t.years.last()?);
        spans.entry(&t.site_id).and_modify(|s| *s = (s.0.min(a), s.1.max(b))).or_insert((a, b));
    }
    let start = spans.values().map(|s| s.0).max()?;
    let end = spans.values().map(|s| s.1).min()?;
    (start <= end).then_some((start, end))
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<i32> {
    let trees =
        read_rings(open(&args.rings)?).with_context(|| format!("invalid ring file {}", args.rings.display()))?;
    let covariates = CovariateTable::read(open(&args.covariates)?)
        .with_context(|| format!("invalid covariate file {}", args.covariates.display()))?;
    let spec: DesignSpec = match &args.design {
        Some(p) => serde_json::from_reader(open(p)?).with_context(|| format!("invalid design spec {}", p.display()))?,
        None => DesignSpec::default(),
    };
    let default = common_window(&trees);
    let start = args.start.or(default.map(|w| w.0));
    let end = args.end.or(default.map(|w| w.1));
    let (Some(start), Some(end)) = (start, end) else {
        bail!("window: sites share no common years; pass --start and --end");
    };

    let (selected, age_info) = match args.age_class {
        Some(class) => {
            if class == 0 || class > DEFAULT_AGE_BREAKS.len() + 1 {
                bail!("age-class: must be in 1..={}", DEFAULT_AGE_BREAKS.len() + 1);
            }
            let split = split_age_classes(&trees, &DEFAULT_AGE_BREAKS, start);
            let chosen = split.classes[class - 1].clone();
            let info = AgeClassInfo {
                class,
                breaks: DEFAULT_AGE_BREAKS.to_vec(),
                reference_year: start,
                trees: chosen.len(),
                excluded_trees: split.excluded.iter().map(|(t, r)| (t.tree_id.clone(), r.clone())).collect(),
            };
            (chosen, Some(info))
        }
        None => (trees.clone(), None),
    };
    if selected.is_empty() {
        eprintln!("notice: age class {} has no trees; nothing written", args.age_class.unwrap_or(0));
        return Ok(EXIT_OK);
    }

    let agg = aggregate_panel(&selected, (start, end))?;
    let designed = build_design(&agg, &covariates, &spec)?;
    let mut w = create(&args.out)?;
    write_panel(&designed.panel, &mut w)?;
    w.flush()?;
    let manifest = IngestManifest { design: designed.manifest, trees: selected.len(), age_class: age_info };
    write_json(&manifest_path(&args.out), &manifest)?;
    Ok(EXIT_OK)
}
