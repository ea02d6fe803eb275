use std::f64::consts::PI;

use randsum::data_io::{
    aggregate_panel, build_design, read_panel_table, read_rings, ring_width_to_bai, split_age_classes, write_panel,
    CovariateTable, DesignSpec, RawTreeSeries, DEFAULT_AGE_BREAKS,
};
use randsum::{fit, FitOptions, ParameterVector};

fn tree(site: &str, id: &str, first: i32, widths: &[f64]) -> RawTreeSeries {
    let years = (first..first + widths.len() as i32).collect();
    RawTreeSeries::new(site.into(), id.into(), years, widths.to_vec()).unwrap()
}

#[test]
fn three_tree_toy_site() {
    let trees =
        [tree("s", "a", 2000, &[10.0; 5]), tree("s", "b", 2001, &[10.0; 4]), tree("s", "c", 2000, &[20.0, 10.0, 10.0])];
    let agg = aggregate_panel(&trees, (2000, 2004)).unwrap();
    let site = &agg.sites[0];
    let hand = [(5.0, 2), (9.0, 3), (15.0, 3), (12.0, 2), (16.0, 2)];
    for (i, (area, n)) in hand.iter().enumerate() {
        assert!((site.y[i] - area * PI).abs() < 1e-12 * area * PI, "year {}", 2000 + i);
        assert_eq!(site.n[i], *n);
    }
}

#[test]
fn conservation_over_window() {
    let mut state = 12345u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) as f64 / (1u64 << 31) as f64
    };
    let mut trees = Vec::new();
    for s in 0..4 {
        for t in 0..15 {
            let first = 1950 + (next() * 40.0) as i32;
            let len = 20 + (next() * 50.0) as usize;
            let widths: Vec<f64> = (0..len).map(|_| 0.05 + 4.0 * next()).collect();
            trees.push(tree(&format!("site{s}"), &format!("t{s}_{t}"), first, &widths));
        }
    }
    let window = (1980, 2010);
    let agg = aggregate_panel(&trees, window).unwrap();
    let panel_total: f64 = agg.sites.iter().flat_map(|s| &s.y).sum();
    let tree_total: f64 = trees
        .iter()
        .map(|t| {
            let bai = ring_width_to_bai(t).unwrap();
            t.years.iter().zip(bai).filter(|(y, _)| (window.0..=window.1).contains(*y)).map(|(_, b)| b).sum::<f64>()
        })
        .sum();
    assert!((panel_total - tree_total).abs() < 1e-8 * tree_total.max(1.0));
}

#[test]
fn rings_to_fit_pipeline() {
    let mut rings = String::from("site_id,tree_id,year,ring_width_mm\n");
    let mut cov = String::from("site_id,year,tmax_spring,tmax_summer,defoliation\n");
    for s in 0..3 {
        for t in 0..6 {
            for (i, year) in (1900 + 7 * t..2021).enumerate() {
                let w = 1.0 + 0.3 * (((year * 7 + t * 13 + s * 5) % 11) as f64) / 11.0 + 0.2 / (1.0 + i as f64);
                rings.push_str(&format!("site{s},t{s}_{t},{year},{w}\n"));
            }
        }
        for year in 1980..=2020 {
            let d = if (year + s) % 9 < 2 { "2" } else { "" };
            cov.push_str(&format!(
                "site{s},{year},{},{},{d}\n",
                10.0 + ((year * 3 + s) % 7) as f64 * 0.5,
                20.0 + ((year * 5 + s) % 5) as f64 * 0.4
            ));
        }
    }
    let trees = read_rings(rings.as_bytes()).unwrap();
    let split = split_age_classes(&trees, &DEFAULT_AGE_BREAKS, 1990);
    assert_eq!(split.classes.iter().map(Vec::len).sum::<usize>(), trees.len());
    let covariates = CovariateTable::read(cov.as_bytes()).unwrap();
    let agg = aggregate_panel(&trees, (1990, 2020)).unwrap();
    let spec = DesignSpec { climate: vec!["tmax".into()], ..DesignSpec::default() };
    let designed = build_design(&agg, &covariates, &spec).unwrap();
    let panel = designed.panel;
    assert_eq!(panel.n_covariates(), 9);
    assert_eq!(panel.order(), 1);

    let mut buf = Vec::new();
    write_panel(&panel, &mut buf).unwrap();
    let back = read_panel_table(buf.as_slice()).unwrap().to_panel(1, None, None).unwrap();
    assert_eq!(back, panel);

    let init = ParameterVector::new(0.5, vec![1.0; 3], vec![0.2], vec![0.0; 9]);
    let result = fit(&panel, &init, &FitOptions::default()).unwrap();
    assert!(result.loss_value.is_finite());
}
