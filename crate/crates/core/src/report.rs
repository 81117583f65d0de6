//! CSV and Markdown emitters for the command-line reports.
//!
//! CSV area columns are rounded to whole hectares; the proportion and
//! standard-error columns carry full precision. Markdown tables mirror the
//! published layout: areas in whole kha, rates to two decimals.

use std::fmt::Write;

use crate::crops::SweepPoint;
use crate::estimate::{AccuracyReport, AreaEstimate, ConfusionMatrix, MetricValue};
use crate::experiments::{BufferComparison, MapComparison, RegionEstimates, SubsampleResult};
use crate::ingest::EventLoadReport;
use crate::synth::CoverageTrial;

fn kha(ha: f64) -> f64 {
    (ha / 1000.0).round()
}

fn pm(metric: &MetricValue) -> String {
    format!("{:.2} ± {:.2}", metric.value, metric.half_width)
}

pub fn area_estimate_csv(est: &AreaEstimate) -> String {
    let mut out = String::from("class,area_ha,ci95_ha,proportion,se_proportion\n");
    for class in &est.classes {
        let _ = writeln!(
            out,
            "{},{:.0},{:.0},{},{}",
            class.label, class.area_ha, class.ci95_ha, class.proportion, class.se_proportion
        );
    }
    out
}

pub fn area_estimate_markdown(title: &str, est: &AreaEstimate) -> String {
    let mut out = format!("## {title}\n\n| Class | Estimate (kha) | 95% CI (kha) |\n|---|---|---|\n");
    for class in &est.classes {
        let _ = writeln!(
            out,
            "| {} | {:.0} | ± {:.0} |",
            class.label,
            kha(class.area_ha),
            kha(class.ci95_ha)
        );
    }
    let _ = writeln!(out, "\nTotal area: {:.0} kha", kha(est.total_area_ha));
    out
}

pub fn confusion_counts_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::from("stratum");
    for label in cm.ref_labels() {
        let _ = write!(out, ",{label}");
    }
    out.push_str(",n,area_ha,weight\n");
    let weights = cm.weights();
    for (i, stratum) in cm.stratum_labels().iter().enumerate() {
        let _ = write!(out, "{stratum}");
        for j in 0..cm.ref_labels().len() {
            let _ = write!(out, ",{}", cm.counts()[i][j]);
        }
        let _ = writeln!(out, ",{},{},{}", cm.row_total(i), cm.stratum_areas()[i], weights[i]);
    }
    out
}

pub fn proportion_matrix_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::from("stratum");
    for label in cm.ref_labels() {
        let _ = write!(out, ",{label}");
    }
    out.push('\n');
    for (i, row) in cm.proportion_matrix().iter().enumerate() {
        let _ = write!(out, "{}", cm.stratum_labels()[i]);
        for cell in row {
            let _ = write!(out, ",{cell}");
        }
        out.push('\n');
    }
    out
}

pub fn accuracy_csv(report: &AccuracyReport) -> String {
    let mut out = String::from("scope,metric,value,ci95_half_width\n");
    let _ = writeln!(
        out,
        "overall,overall_accuracy,{},{}",
        report.overall.value, report.overall.half_width
    );
    for class in &report.classes {
        let _ = writeln!(out, "{},users_accuracy,{},{}", class.label, class.users.value, class.users.half_width);
        let _ = writeln!(
            out,
            "{},producers_accuracy,{},{}",
            class.label, class.producers.value, class.producers.half_width
        );
        if let Some(f1) = &class.f1 {
            let _ = writeln!(out, "{},f1,{},{}", class.label, f1.value, f1.half_width);
        }
        let _ = writeln!(out, "{},tpr,{},", class.label, class.tpr);
        let _ = writeln!(out, "{},fpr,{},", class.label, class.fpr);
    }
    out
}

pub fn accuracy_markdown(title: &str, report: &AccuracyReport) -> String {
    let mut out = format!(
        "## {title}\n\nOverall accuracy: {}\n\n| Class | Precision (UA) | Recall (PA) | TPR | FPR |\n|---|---|---|---|---|\n",
        pm(&report.overall)
    );
    for class in &report.classes {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.2} | {:.2} |",
            class.label,
            pm(&class.users),
            pm(&class.producers),
            class.tpr,
            class.fpr
        );
    }
    out
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("n_sigma,tpr,fpr\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.n_sigma, p.tpr, p.fpr);
    }
    out
}

pub fn events_summary_csv(report: &EventLoadReport) -> String {
    let mut out = String::from("key,value\n");
    let _ = writeln!(out, "events,{}", report.events.len());
    let _ = writeln!(out, "skipped_rows,{}", report.skipped.len());
    for (event_type, count) in &report.tally {
        let _ = writeln!(out, "type:{event_type},{count}");
    }
    out
}

pub fn zone_counts_csv(counts: &std::collections::BTreeMap<String, usize>) -> String {
    let mut out = String::from("zone,events\n");
    for (zone, n) in counts {
        let _ = writeln!(out, "{zone},{n}");
    }
    out
}

pub fn regional_csv(regions: &[RegionEstimates]) -> String {
    let mut out = String::from("region,labeling,class,area_ha,ci95_ha,proportion,se_proportion,note\n");
    for region in regions {
        let mut emit = |labeling: &str, result: &crate::error::Result<AreaEstimate>| match result {
            Ok(est) => {
                for class in &est.classes {
                    let _ = writeln!(
                        out,
                        "{},{labeling},{},{:.0},{:.0},{},{},",
                        region.region, class.label, class.area_ha, class.ci95_ha, class.proportion, class.se_proportion
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{},{labeling},,,,,,infeasible: {e}", region.region);
            }
        };
        emit("change", &region.change);
        emit("annual_2020", &region.annual_2020);
        emit("annual_2021", &region.annual_2021);
    }
    out
}

pub fn regional_markdown(regions: &[RegionEstimates]) -> String {
    let mut out = String::from("# Regional estimates\n");
    for region in regions {
        let _ = writeln!(out, "\n## {} ({} samples)\n", region.region, region.n_samples);
        for (labeling, result) in [
            ("Change 2020-2021", &region.change),
            ("Annual 2020", &region.annual_2020),
            ("Annual 2021", &region.annual_2021),
        ] {
            match result {
                Ok(est) => {
                    let _ = writeln!(out, "| {labeling} | Estimate (kha) | 95% CI (kha) |");
                    let _ = writeln!(out, "|---|---|---|");
                    for class in &est.classes {
                        let _ = writeln!(
                            out,
                            "| {} | {:.0} | ± {:.0} |",
                            class.label,
                            kha(class.area_ha),
                            kha(class.ci95_ha)
                        );
                    }
                    out.push('\n');
                }
                Err(e) => {
                    let _ = writeln!(out, "{labeling}: infeasible ({e})\n");
                }
            }
        }
        if let Ok(acc) = &region.change_accuracy {
            let _ = writeln!(out, "Change-map overall accuracy: {}", pm(&acc.overall));
        }
    }
    out
}

pub fn buffer_comparison_csv(cmp: &BufferComparison) -> String {
    let mut out = String::from("side,n_samples,class,area_ha,ci95_ha,pct_low,pct_high,note\n");
    for side in [&cmp.inside, &cmp.outside] {
        match &side.outcome {
            Ok(est) => {
                for (class, (label, lo, hi)) in est.estimate.classes.iter().zip(&est.percent_intervals) {
                    debug_assert_eq!(&class.label, label);
                    let _ = writeln!(
                        out,
                        "{},{},{},{:.0},{:.0},{lo},{hi},",
                        side.name, side.n_samples, class.label, class.area_ha, class.ci95_ha
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{},{},,,,,,infeasible: {e}", side.name, side.n_samples);
            }
        }
    }
    out
}

pub fn buffer_comparison_markdown(cmp: &BufferComparison) -> String {
    let mut out = format!(
        "# Change estimates inside vs outside the {:.0} km event buffer\n",
        cmp.radius_m / 1000.0
    );
    for side in [&cmp.inside, &cmp.outside] {
        let _ = writeln!(out, "\n## {} ({} samples)\n", side.name, side.n_samples);
        match &side.outcome {
            Ok(est) => {
                let _ = writeln!(out, "| Class | Estimate (kha) | Share of side area |");
                let _ = writeln!(out, "|---|---|---|");
                for (class, (_, lo, hi)) in est.estimate.classes.iter().zip(&est.percent_intervals) {
                    let _ = writeln!(
                        out,
                        "| {} | {:.0} ± {:.0} | {lo} - {hi}% |",
                        class.label,
                        kha(class.area_ha),
                        kha(class.ci95_ha)
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(out, "infeasible: {e}");
            }
        }
    }
    out
}

pub fn subsample_csv(result: &SubsampleResult) -> String {
    let mut out = String::from(
        "seed,loss_area_ha,loss_ci95_ha,oa,oa_hw,ua_loss,ua_loss_hw,pa_loss,pa_loss_hw,note\n",
    );
    for row in &result.rows {
        match &row.outcome {
            Ok(est) => {
                let _ = writeln!(
                    out,
                    "{},{:.0},{:.0},{},{},{},{},{},{},",
                    row.seed,
                    est.loss_area_ha,
                    est.loss_ci95_ha,
                    est.overall.value,
                    est.overall.half_width,
                    est.users_loss.value,
                    est.users_loss.half_width,
                    est.producers_loss.value,
                    est.producers_loss.half_width
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{},,,,,,,,,infeasible: {e}", row.seed);
            }
        }
    }
    let _ = writeln!(
        out,
        "median,{:.0},{:.0},,,,,,,",
        result.median_area_ha, result.median_ci95_ha
    );
    let _ = writeln!(out, "mean,{:.0},{:.0},,,,,,,", result.mean_area_ha, result.mean_ci95_ha);
    out
}

pub fn compare_maps_csv(ranked: &[MapComparison]) -> String {
    let mut out = String::from("map,f1,f1_hw,oa,oa_hw,pa,pa_hw,ua,ua_hw,tn,fp,fn,tp\n");
    for cmp in ranked {
        let crop = &cmp.report.classes[0];
        let f1 = crop.f1.expect("binary reports carry f1");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            cmp.name,
            f1.value,
            f1.half_width,
            cmp.report.overall.value,
            cmp.report.overall.half_width,
            crop.producers.value,
            crop.producers.half_width,
            crop.users.value,
            crop.users.half_width,
            cmp.counts.tn,
            cmp.counts.fp,
            cmp.counts.fn_,
            cmp.counts.tp
        );
    }
    out
}

pub fn compare_maps_markdown(ranked: &[MapComparison]) -> String {
    let mut out = String::from(
        "# Candidate maps vs the labeled test set\n\n| Map | F1 | OA | Recall (PA) | Precision (UA) | TN | FP | FN | TP |\n|---|---|---|---|---|---|---|---|---|\n",
    );
    for cmp in ranked {
        let crop = &cmp.report.classes[0];
        let f1 = crop.f1.expect("binary reports carry f1");
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            cmp.name,
            pm(&f1),
            pm(&cmp.report.overall),
            pm(&crop.producers),
            pm(&crop.users),
            cmp.counts.tn,
            cmp.counts.fp,
            cmp.counts.fn_,
            cmp.counts.tp
        );
    }
    out
}

pub fn simulate_reps_csv(trial: &CoverageTrial) -> String {
    let mut out = String::from("rep,class,area_ha,ci95_ha,covered\n");
    for rep in &trial.reps {
        for (k, (area, ci, covered)) in rep.classes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                rep.rep,
                crate::crops::ChangeClass::ALL[k].label(),
                area,
                ci,
                covered
            );
        }
    }
    out
}

pub fn simulate_summary_csv(trial: &CoverageTrial) -> String {
    let mut out = String::from("class,true_area_ha,mean_area_ha,bias_ha,relative_bias,coverage,reps,infeasible\n");
    for class in &trial.per_class {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            class.class.label(),
            class.true_area_ha,
            class.mean_area_ha,
            class.bias_ha,
            class.relative_bias,
            class.coverage,
            trial.reps.len(),
            trial.infeasible
        );
    }
    out
}
