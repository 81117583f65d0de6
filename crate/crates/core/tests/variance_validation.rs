//! Monte Carlo validation of the analytic variance formulas: over repeated
//! stratified samples of a fixed synthetic landscape, the mean estimated
//! variance of each metric must track the empirical variance of the metric
//! across reps.

use cropchange_core::crops::ChangeClass;
use cropchange_core::estimate::{build_confusion, estimate_area, stratified_accuracy, Labeling, Z_95};
use cropchange_core::grid::{stratum_areas, PixelArea};
use cropchange_core::rng::derive_seed;
use cropchange_core::sampling::{allocate, draw_sample};
use cropchange_core::synth::{generate, SynthSpec};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

#[test]
fn analytic_variances_track_empirical_variances() {
    let spec = SynthSpec {
        ncols: 120,
        nrows: 120,
        proportions: [0.40, 0.30, 0.15, 0.15],
        error_matrix: SynthSpec::symmetric_error(0.15),
        seed: 9001,
        patch_size: 4,
    };
    let (truth, mapped) = generate(&spec).unwrap();
    let pixel_area = PixelArea::constant(0.01).unwrap();
    let areas = stratum_areas(&mapped.grid, &pixel_area, None);
    let plan = allocate(500, 60, &areas).unwrap();

    let reps = 300;
    let mut oa_values = Vec::with_capacity(reps);
    let mut oa_vars = Vec::with_capacity(reps);
    let mut ua: Vec<Vec<f64>> = vec![Vec::new(); 4];
    let mut ua_vars: Vec<Vec<f64>> = vec![Vec::new(); 4];
    let mut pa: Vec<Vec<f64>> = vec![Vec::new(); 4];
    let mut pa_vars: Vec<Vec<f64>> = vec![Vec::new(); 4];
    let mut se_loss = Vec::with_capacity(reps);
    let mut area_loss = Vec::with_capacity(reps);

    for rep in 0..reps {
        let seed = derive_seed(spec.seed, &format!("var-rep-{rep}"));
        let mut records = draw_sample(&mapped, &plan, seed).unwrap();
        for record in &mut records {
            let class = ChangeClass::from_code(truth.grid.class_at(&record.location).unwrap()).unwrap();
            let (y0, y1) = class.annual_labels();
            record.ref_2020 = Some(y0);
            record.ref_2021 = Some(y1);
        }
        let cm = build_confusion(&records, Labeling::Change, &areas, None).unwrap();
        let est = estimate_area(&cm);
        let loss = est.class("loss").unwrap();
        area_loss.push(loss.area_ha);
        se_loss.push(loss.se_proportion * est.total_area_ha);

        let report = stratified_accuracy(&cm).unwrap();
        oa_values.push(report.overall.value);
        oa_vars.push((report.overall.half_width / Z_95).powi(2));
        for (k, class) in report.classes.iter().enumerate() {
            ua[k].push(class.users.value);
            ua_vars[k].push((class.users.half_width / Z_95).powi(2));
            pa[k].push(class.producers.value);
            pa_vars[k].push((class.producers.half_width / Z_95).powi(2));
        }
    }

    // area SE: empirical sd of the loss estimate vs mean analytic SE
    let empirical_sd = variance(&area_loss).sqrt();
    let analytic_sd = mean(&se_loss);
    let ratio = analytic_sd / empirical_sd;
    println!("loss area: empirical sd {empirical_sd:.2} ha, mean analytic {analytic_sd:.2} ha, ratio {ratio:.3}");
    assert!((0.7..1.4).contains(&ratio), "area SE ratio {ratio}");

    let check = |name: &str, values: &[f64], vars: &[f64]| {
        let empirical = variance(values);
        let analytic = mean(vars);
        let ratio = analytic / empirical;
        println!("{name}: empirical var {empirical:.3e}, mean analytic {analytic:.3e}, ratio {ratio:.3}");
        assert!(
            (0.5..2.0).contains(&ratio),
            "{name}: analytic/empirical variance ratio {ratio}"
        );
    };
    check("OA", &oa_values, &oa_vars);
    for k in 0..4 {
        let label = ChangeClass::ALL[k].label();
        check(&format!("UA {label}"), &ua[k], &ua_vars[k]);
        check(&format!("PA {label}"), &pa[k], &pa_vars[k]);
    }
}
