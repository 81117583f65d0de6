use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use cropchange_core::crops::{
    apply_ndvi_filter, compose_change, peak_ndvi, peak_stats, threshold_sweep, ChangeClass,
    ChangeMap, FilterConfig, NdviStack, DEFAULT_SWEEP_THRESHOLDS,
};
use cropchange_core::estimate::{
    build_confusion, estimate_area, stratified_accuracy, BootstrapConfig, Labeling,
};
use cropchange_core::experiments::{
    buffer_comparison, compare_maps, load_map_manifest, regional_estimates, subsample_experiment,
    RegionSpec,
};
use cropchange_core::geo::{load_zones, union_of_zones, GeoPoint};
use cropchange_core::grid::{stratum_areas, ClassGrid, PixelArea};
use cropchange_core::ingest::{
    events_per_zone, load_adjudications, load_annotations, load_events, load_label_points,
    load_samples, write_samples,
};
use cropchange_core::report;
use cropchange_core::sampling::{allocate, draw_sample, merge_labels};
use cropchange_core::synth::{coverage_trial, SynthSpec};

#[derive(Parser)]
#[command(
    name = "cropchange",
    version,
    about = "Design-based estimation of cropland area and change from classified rasters and stratified reference samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Combine two binary annual maps into a four-class change map
    ComposeChange {
        #[arg(long)]
        map_2020: PathBuf,
        #[arg(long)]
        map_2021: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Reclassify anomalously low peak-NDVI crop pixels to non-crop
    NdviFilter {
        #[arg(long)]
        map_2020: Option<PathBuf>,
        #[arg(long)]
        map_2021: Option<PathBuf>,
        #[arg(long)]
        ndvi_manifest: PathBuf,
        #[arg(long, default_value_t = 3.5)]
        n_sigma: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// TPR/FPR of the filtered map against labeled points over a threshold grid
    Sweep {
        #[arg(long)]
        map_2020: Option<PathBuf>,
        #[arg(long)]
        map_2021: Option<PathBuf>,
        #[arg(long)]
        ndvi_manifest: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Allocate and draw a stratified random sample of pixels
    DesignSample {
        #[arg(long)]
        change_map: PathBuf,
        #[arg(long)]
        total_n: usize,
        #[arg(long, default_value_t = 100)]
        prealloc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        pixel_area_ha: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Merge annotator labels (and tie adjudications) into consensus samples
    MergeLabels {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, required = true)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        adjudication: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Stratified change-area estimate with confusion matrices and accuracy
    EstimateArea {
        #[arg(long)]
        change_map: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        pixel_area_ha: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Annual crop/noncrop area estimate for one year
    EstimateAnnual {
        #[arg(long)]
        change_map: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        year: u16,
        #[arg(long)]
        pixel_area_ha: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-zone change and annual estimates (map clipped, samples filtered)
    Subset {
        #[arg(long)]
        change_map: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        zones: PathBuf,
        #[arg(long)]
        pixel_area_ha: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Change estimates inside vs outside a buffer around conflict events
    BufferCompare {
        #[arg(long)]
        change_map: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        zones: PathBuf,
        #[arg(long, default_value_t = 5000.0)]
        radius_m: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec!["Peaceful Protests".to_string()])]
        exclude_types: Vec<String>,
        #[arg(long)]
        pixel_area_ha: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Equal-sample-size robustness experiment outside the event buffer
    SubsampleExp {
        #[arg(long)]
        change_map: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        zones: PathBuf,
        #[arg(long, default_value_t = 5000.0)]
        radius_m: f64,
        #[arg(long)]
        n_sub: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec!["Peaceful Protests".to_string()])]
        exclude_types: Vec<String>,
        #[arg(long)]
        pixel_area_ha: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score external land-cover maps against a labeled test set
    CompareMaps {
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Load and filter an ACLED-style event CSV
    LoadEvents {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec!["Peaceful Protests".to_string()])]
        exclude_types: Vec<String>,
        #[arg(long)]
        zones: Option<PathBuf>,
        #[arg(long)]
        date_start: Option<chrono::NaiveDate>,
        #[arg(long)]
        date_end: Option<chrono::NaiveDate>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Monte Carlo validation of estimator bias and CI coverage
    Simulate {
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 800)]
        total_n: usize,
        #[arg(long, default_value_t = 100)]
        prealloc: usize,
        #[arg(long, default_value_t = 200)]
        nrows: usize,
        #[arg(long, default_value_t = 200)]
        ncols: usize,
        #[arg(long, default_value_t = 0.1)]
        confusion: f64,
        #[arg(long, default_value_t = 5)]
        patch_size: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.45, 0.35, 0.10, 0.10])]
        proportions: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

/// Written next to every command's outputs; argv, input digests, seed, and
/// config pin the run well enough to replay it byte-identically.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    argv: Vec<String>,
    version: String,
    seed: Option<u64>,
    config: BTreeMap<String, String>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

struct RunContext {
    command: String,
    out_dir: PathBuf,
    seed: Option<u64>,
    config: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl RunContext {
    fn new(command: &str, out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
        Ok(RunContext {
            command: command.to_string(),
            out_dir: out_dir.to_path_buf(),
            seed: None,
            config: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    fn config(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    fn write_text(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(path.clone());
        println!("wrote {}", path.display());
        Ok(path)
    }

    fn track_output(&mut self, path: PathBuf) {
        println!("wrote {}", path.display());
        self.outputs.push(path);
    }

    fn finish(self) -> Result<()> {
        let digest = |path: &Path| -> Result<FileDigest> {
            let bytes = std::fs::read(path).with_context(|| format!("cannot digest {}", path.display()))?;
            Ok(FileDigest {
                path: path.display().to_string(),
                sha256: hex_digest(&bytes),
            })
        };
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: self.config,
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        };
        let path = self.out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    use std::fmt::Write;
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Resolve the pixel-area mode and record it in the manifest, since which
/// mode a run used matters for reproducing its numbers.
fn pixel_area(ctx: &mut RunContext, flag: Option<f64>) -> Result<PixelArea> {
    match flag {
        Some(ha) => {
            ctx.config("pixel_area", format!("constant:{ha}"));
            Ok(PixelArea::constant(ha)?)
        }
        None => {
            ctx.config("pixel_area", "latitude_corrected");
            Ok(PixelArea::latitude_corrected())
        }
    }
}

fn single_map_flag(
    map_2020: Option<PathBuf>,
    map_2021: Option<PathBuf>,
) -> Result<(PathBuf, &'static str)> {
    match (map_2020, map_2021) {
        (Some(p), None) => Ok((p, "2020")),
        (None, Some(p)) => Ok((p, "2021")),
        _ => bail!("give exactly one of --map-2020 or --map-2021"),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::ComposeChange {
            map_2020,
            map_2021,
            out_dir,
        } => {
            let mut ctx = RunContext::new("compose-change", &out_dir)?;
            ctx.input(&map_2020);
            ctx.input(&map_2021);
            let a = ClassGrid::read(&map_2020)?;
            let b = ClassGrid::read(&map_2021)?;
            let change = compose_change(&a, &b)?;
            let map_path = out_dir.join("change_map.asc");
            change.grid.write(&map_path)?;
            ctx.track_output(map_path);
            let mut counts = String::from("class,label,pixels\n");
            for class in ChangeClass::ALL {
                counts.push_str(&format!(
                    "{},{},{}\n",
                    class.code(),
                    class.label(),
                    change.class_counts[class.code() as usize]
                ));
            }
            ctx.write_text("class_counts.csv", &counts)?;
            ctx.finish()
        }

        Command::NdviFilter {
            map_2020,
            map_2021,
            ndvi_manifest,
            n_sigma,
            out_dir,
        } => {
            let mut ctx = RunContext::new("ndvi-filter", &out_dir)?;
            let (map_path, year) = single_map_flag(map_2020, map_2021)?;
            ctx.input(&map_path);
            ctx.input(&ndvi_manifest);
            ctx.config("year", year);
            ctx.config("n_sigma", n_sigma);
            let crop_map = ClassGrid::read(&map_path)?;
            let stack = NdviStack::from_manifest(&ndvi_manifest)?;
            let peaks = peak_ndvi(&stack);
            let stats = peak_stats(&crop_map, &peaks)?;
            let (filtered, reclassified) =
                apply_ndvi_filter(&crop_map, &peaks, FilterConfig::new(n_sigma)?)?;
            let out_path = out_dir.join(format!("filtered_map_{year}.asc"));
            filtered.write(&out_path)?;
            ctx.track_output(out_path);
            let summary = format!(
                "key,value\nmu,{}\nsigma,{}\ncrop_pixels,{}\nn_sigma,{}\nthreshold,{}\nreclassified,{}\n",
                stats.mu,
                stats.sigma,
                stats.count,
                n_sigma,
                stats.mu - n_sigma * stats.sigma,
                reclassified
            );
            ctx.write_text("filter_summary.csv", &summary)?;
            ctx.finish()
        }

        Command::Sweep {
            map_2020,
            map_2021,
            ndvi_manifest,
            points,
            thresholds,
            out_dir,
        } => {
            let mut ctx = RunContext::new("sweep", &out_dir)?;
            let (map_path, year) = single_map_flag(map_2020, map_2021)?;
            ctx.input(&map_path);
            ctx.input(&ndvi_manifest);
            ctx.input(&points);
            ctx.config("year", year);
            let crop_map = ClassGrid::read(&map_path)?;
            let stack = NdviStack::from_manifest(&ndvi_manifest)?;
            let peaks = peak_ndvi(&stack);
            let labels: Vec<(GeoPoint, bool)> = load_label_points(&points)?
                .into_iter()
                .map(|(p, l)| (p, l == cropchange_core::crops::CropLabel::Crop))
                .collect();
            let grid = thresholds.unwrap_or_else(|| DEFAULT_SWEEP_THRESHOLDS.to_vec());
            ctx.config(
                "thresholds",
                grid.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
            );
            let sweep = threshold_sweep(&crop_map, &peaks, &labels, &grid)?;
            ctx.write_text("sweep.csv", &report::sweep_csv(&sweep))?;
            ctx.finish()
        }

        Command::DesignSample {
            change_map,
            total_n,
            prealloc,
            seed,
            pixel_area_ha,
            out_dir,
        } => {
            let mut ctx = RunContext::new("design-sample", &out_dir)?;
            ctx.input(&change_map);
            ctx.seed(seed);
            ctx.config("total_n", total_n);
            ctx.config("prealloc", prealloc);
            let map = ChangeMap::read(&change_map)?;
            let area = pixel_area(&mut ctx, pixel_area_ha)?;
            let areas = stratum_areas(&map.grid, &area, None);
            let plan = allocate(total_n, prealloc, &areas)?;
            let records = draw_sample(&map, &plan, seed)?;
            let samples_path = out_dir.join("samples.csv");
            write_samples(&samples_path, &records)?;
            ctx.track_output(samples_path);
            let mut alloc = String::from("stratum,label,area_ha,prealloc,n\n");
            for class in ChangeClass::ALL {
                alloc.push_str(&format!(
                    "{},{},{},{},{}\n",
                    class.code(),
                    class.label(),
                    areas.get(&class.code()).copied().unwrap_or(0.0),
                    plan.prealloc.get(&class.code()).copied().unwrap_or(0),
                    plan.per_stratum_n.get(&class.code()).copied().unwrap_or(0)
                ));
            }
            ctx.write_text("allocation.csv", &alloc)?;
            ctx.finish()
        }

        Command::MergeLabels {
            samples,
            labels,
            adjudication,
            out_dir,
        } => {
            let mut ctx = RunContext::new("merge-labels", &out_dir)?;
            ctx.input(&samples);
            let base = load_samples(&samples)?;
            let mut annotations = Vec::new();
            for path in &labels {
                ctx.input(path);
                annotations.extend(load_annotations(path)?);
            }
            let adjudications = match &adjudication {
                Some(path) => {
                    ctx.input(path);
                    load_adjudications(path)?
                }
                None => Vec::new(),
            };
            let merged = merge_labels(&base, &annotations, &adjudications)?;
            let merged_path = out_dir.join("merged_samples.csv");
            write_samples(&merged_path, &merged)?;
            ctx.track_output(merged_path);
            let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
            for record in &merged {
                *tally.entry(record.consensus_status.as_str()).or_insert(0) += 1;
            }
            let mut summary = String::from("status,samples\n");
            for (status, n) in tally {
                summary.push_str(&format!("{status},{n}\n"));
            }
            ctx.write_text("merge_summary.csv", &summary)?;
            ctx.finish()
        }

        Command::EstimateArea {
            change_map,
            samples,
            pixel_area_ha,
            out_dir,
        } => {
            let mut ctx = RunContext::new("estimate-area", &out_dir)?;
            ctx.input(&change_map);
            ctx.input(&samples);
            let map = ChangeMap::read(&change_map)?;
            let records = load_samples(&samples)?;
            let area = pixel_area(&mut ctx, pixel_area_ha)?;
            let areas = stratum_areas(&map.grid, &area, None);
            let cm = build_confusion(&records, Labeling::Change, &areas, None)?;
            let est = estimate_area(&cm);
            ctx.write_text("change_area.csv", &report::area_estimate_csv(&est))?;
            ctx.write_text(
                "change_area.md",
                &report::area_estimate_markdown("Change area 2020-2021", &est),
            )?;
            ctx.write_text("confusion_counts.csv", &report::confusion_counts_csv(&cm))?;
            ctx.write_text("proportion_matrix.csv", &report::proportion_matrix_csv(&cm))?;
            let accuracy = stratified_accuracy(&cm)?;
            ctx.write_text("change_accuracy.csv", &report::accuracy_csv(&accuracy))?;
            ctx.write_text(
                "change_accuracy.md",
                &report::accuracy_markdown("Change-map accuracy", &accuracy),
            )?;
            ctx.finish()
        }

        Command::EstimateAnnual {
            change_map,
            samples,
            year,
            pixel_area_ha,
            out_dir,
        } => {
            if year != 2020 && year != 2021 {
                bail!("--year must be 2020 or 2021");
            }
            let mut ctx = RunContext::new("estimate-annual", &out_dir)?;
            ctx.input(&change_map);
            ctx.input(&samples);
            ctx.config("year", year);
            let map = ChangeMap::read(&change_map)?;
            let records = load_samples(&samples)?;
            let area = pixel_area(&mut ctx, pixel_area_ha)?;
            let areas = stratum_areas(&map.grid, &area, None);
            let cm = build_confusion(&records, Labeling::Annual(year), &areas, None)?;
            let est = estimate_area(&cm);
            ctx.write_text(&format!("annual_area_{year}.csv"), &report::area_estimate_csv(&est))?;
            ctx.write_text(
                &format!("annual_area_{year}.md"),
                &report::area_estimate_markdown(&format!("Annual cropland area {year}"), &est),
            )?;
            ctx.write_text(
                &format!("annual_confusion_{year}.csv"),
                &report::confusion_counts_csv(&cm),
            )?;
            ctx.finish()
        }

        Command::Subset {
            change_map,
            samples,
            zones,
            pixel_area_ha,
            out_dir,
        } => {
            let mut ctx = RunContext::new("subset", &out_dir)?;
            ctx.input(&change_map);
            ctx.input(&samples);
            ctx.input(&zones);
            let map = ChangeMap::read(&change_map)?;
            let records = load_samples(&samples)?;
            let area = pixel_area(&mut ctx, pixel_area_ha)?;
            let named = load_zones(&zones)?;
            let mut regions: Vec<RegionSpec> =
                vec![RegionSpec::WholeMap { name: "whole_map".into() }];
            regions.extend(named.into_iter().map(|z| RegionSpec::Region {
                name: z.name,
                region: z.region,
            }));
            let results = regional_estimates(&map, &records, &regions, &area);
            ctx.write_text("regional_estimates.csv", &report::regional_csv(&results))?;
            ctx.write_text("regional_report.md", &report::regional_markdown(&results))?;
            ctx.finish()
        }

        Command::BufferCompare {
            change_map,
            samples,
            events,
            zones,
            radius_m,
            exclude_types,
            pixel_area_ha,
            out_dir,
        } => {
            let mut ctx = RunContext::new("buffer-compare", &out_dir)?;
            ctx.input(&change_map);
            ctx.input(&samples);
            ctx.input(&events);
            ctx.input(&zones);
            ctx.config("radius_m", radius_m);
            let map = ChangeMap::read(&change_map)?;
            let records = load_samples(&samples)?;
            let area = pixel_area(&mut ctx, pixel_area_ha)?;
            let excluded: BTreeSet<String> = exclude_types.into_iter().collect();
            let event_report = load_events(&events, &excluded, None)?;
            if !event_report.skipped.is_empty() {
                eprintln!(
                    "warning: skipped {} malformed event rows",
                    event_report.skipped.len()
                );
            }
            let centers: Vec<GeoPoint> = event_report.events.iter().map(|e| e.location).collect();
            ctx.config("events_loaded", centers.len());
            ctx.config("events_skipped", event_report.skipped.len());
            let region = union_of_zones(&load_zones(&zones)?)?;
            let cmp = buffer_comparison(&map, &records, &centers, radius_m, &region, &area)?;
            ctx.write_text("buffer_comparison.csv", &report::buffer_comparison_csv(&cmp))?;
            ctx.write_text(
                "buffer_comparison.md",
                &report::buffer_comparison_markdown(&cmp),
            )?;
            ctx.finish()
        }

        Command::SubsampleExp {
            change_map,
            samples,
            events,
            zones,
            radius_m,
            n_sub,
            seeds,
            exclude_types,
            pixel_area_ha,
            out_dir,
        } => {
            let mut ctx = RunContext::new("subsample-exp", &out_dir)?;
            ctx.input(&change_map);
            ctx.input(&samples);
            ctx.input(&events);
            ctx.input(&zones);
            ctx.config("radius_m", radius_m);
            ctx.config("n_sub", n_sub);
            ctx.config(
                "seeds",
                seeds.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
            );
            let map = ChangeMap::read(&change_map)?;
            let records = load_samples(&samples)?;
            let area = pixel_area(&mut ctx, pixel_area_ha)?;
            let excluded: BTreeSet<String> = exclude_types.into_iter().collect();
            let centers: Vec<GeoPoint> = load_events(&events, &excluded, None)?
                .events
                .iter()
                .map(|e| e.location)
                .collect();
            let region = union_of_zones(&load_zones(&zones)?)?;
            let buffer = cropchange_core::geo::BufferSet::new(centers, radius_m)?;
            let outside = RegionSpec::BufferOutside {
                name: "outside_buffer".into(),
                region,
                buffer,
            };
            let outside_samples: Vec<_> = records
                .iter()
                .filter(|s| outside.contains(&s.location))
                .cloned()
                .collect();
            ctx.config("outside_samples", outside_samples.len());
            let mask = |p: &GeoPoint| outside.contains(p);
            let outside_areas = stratum_areas(&map.grid, &area, Some(&mask));
            let result = subsample_experiment(&outside_samples, n_sub, &seeds, &outside_areas)?;
            ctx.write_text("subsample.csv", &report::subsample_csv(&result))?;
            ctx.finish()
        }

        Command::CompareMaps {
            maps,
            points,
            seed,
            out_dir,
        } => {
            let mut ctx = RunContext::new("compare-maps", &out_dir)?;
            ctx.input(&maps);
            ctx.input(&points);
            ctx.seed(seed);
            let candidates = load_map_manifest(&maps)?;
            let test_points = load_label_points(&points)?;
            let cfg = BootstrapConfig { resamples: 1000, seed };
            let ranked = compare_maps(&candidates, &test_points, &cfg)?;
            ctx.write_text("map_comparison.csv", &report::compare_maps_csv(&ranked))?;
            ctx.write_text("map_comparison.md", &report::compare_maps_markdown(&ranked))?;
            ctx.finish()
        }

        Command::LoadEvents {
            events,
            exclude_types,
            zones,
            date_start,
            date_end,
            out_dir,
        } => {
            let mut ctx = RunContext::new("load-events", &out_dir)?;
            ctx.input(&events);
            let excluded: BTreeSet<String> = exclude_types.into_iter().collect();
            let range = match (date_start, date_end) {
                (Some(a), Some(b)) => Some((a, b)),
                (None, None) => None,
                _ => bail!("--date-start and --date-end must be given together"),
            };
            let loaded = load_events(&events, &excluded, range)?;
            ctx.write_text("events_summary.csv", &report::events_summary_csv(&loaded))?;
            let mut clean = String::from("event_date,event_type,lon,lat\n");
            for e in &loaded.events {
                clean.push_str(&format!(
                    "{},{},{},{}\n",
                    e.date, e.event_type, e.location.lon, e.location.lat
                ));
            }
            ctx.write_text("events.csv", &clean)?;
            if !loaded.skipped.is_empty() {
                let mut skipped = String::from("line,reason\n");
                for (line, reason) in &loaded.skipped {
                    skipped.push_str(&format!("{line},{}\n", reason.replace(',', ";")));
                }
                ctx.write_text("skipped_rows.csv", &skipped)?;
            }
            if let Some(zones_path) = zones {
                ctx.input(&zones_path);
                let named = load_zones(&zones_path)?;
                let counts = events_per_zone(&loaded.events, &named);
                ctx.write_text("events_by_zone.csv", &report::zone_counts_csv(&counts))?;
            }
            ctx.finish()
        }

        Command::Simulate {
            reps,
            seed,
            total_n,
            prealloc,
            nrows,
            ncols,
            confusion,
            patch_size,
            proportions,
            out_dir,
        } => {
            let mut ctx = RunContext::new("simulate", &out_dir)?;
            ctx.seed(seed);
            ctx.config("reps", reps);
            ctx.config("total_n", total_n);
            ctx.config("prealloc", prealloc);
            ctx.config("dims", format!("{nrows}x{ncols}"));
            ctx.config("confusion", confusion);
            ctx.config("patch_size", patch_size);
            if proportions.len() != 4 {
                bail!("--proportions needs exactly four values");
            }
            let spec = SynthSpec {
                ncols,
                nrows,
                proportions: [proportions[0], proportions[1], proportions[2], proportions[3]],
                error_matrix: SynthSpec::symmetric_error(confusion),
                seed,
                patch_size,
            };
            let trial = coverage_trial(&spec, total_n, prealloc, reps)?;
            ctx.write_text("simulate_reps.csv", &report::simulate_reps_csv(&trial))?;
            ctx.write_text("simulate_summary.csv", &report::simulate_summary_csv(&trial))?;
            for class in &trial.per_class {
                println!(
                    "{}: true {:.1} ha, mean {:.1} ha, relative bias {:+.4}%, coverage {:.1}%",
                    class.class.label(),
                    class.true_area_ha,
                    class.mean_area_ha,
                    class.relative_bias * 100.0,
                    class.coverage * 100.0
                );
            }
            ctx.finish()
        }
    }
}
