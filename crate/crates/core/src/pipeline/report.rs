//! Figure data (CSV) and SVG renderings built from a finished run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::artifacts::*;
use super::{require, svg, PipelineError};
use crate::behavior::HOURS_PER_DAY;
use crate::eigen::EigenModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    /// Buildings that get per-building figures; empty means the first
    /// `max_buildings` fitted buildings.
    pub buildings: Vec<String>,
    pub max_buildings: usize,
    /// Number of leading eigenbehaviors drawn as grids.
    pub top: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            buildings: Vec::new(),
            max_buildings: 3,
            top: 3,
        }
    }
}

pub fn category_names(categories: usize) -> Vec<String> {
    if categories == 4 {
        ["low", "medium_low", "medium_high", "high"].map(String::from).to_vec()
    } else {
        (0..categories).map(|c| format!("level_{c}")).collect()
    }
}

/// Building id made safe for use in a file name.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn grid_rows(vec: &[f64], categories: usize) -> Vec<Vec<f64>> {
    (0..categories)
        .map(|c| vec[c * HOURS_PER_DAY..(c + 1) * HOURS_PER_DAY].to_vec())
        .collect()
}

fn explained_figure(dir: &Path, model: &EigenModel, written: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    let stem = file_stem(&model.building_id);
    let path = dir.join(format!("explained_{stem}.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["component", "fraction", "cumulative"])?;
    let mut cumulative = 0.0;
    let mut frac_pts = Vec::new();
    let mut cum_pts = Vec::new();
    for (j, f) in model.explained.iter().enumerate() {
        cumulative += f;
        w.write_record([(j + 1).to_string(), f.to_string(), cumulative.to_string()])?;
        frac_pts.push(((j + 1) as f64, *f));
        cum_pts.push(((j + 1) as f64, cumulative));
    }
    finish(&path, w)?;
    written.push(path);

    let svg_path = dir.join(format!("explained_{stem}.svg"));
    let doc = svg::line_panels(
        &format!("Explained variance, {}", model.building_id),
        &[(
            String::new(),
            vec![("fraction".into(), frac_pts), ("cumulative".into(), cum_pts)],
        )],
        "eigenbehavior",
        "variance",
    );
    write_text(&svg_path, &doc)?;
    written.push(svg_path);
    Ok(())
}

fn eigenbehavior_figures(
    dir: &Path,
    model: &EigenModel,
    top: usize,
    written: &mut Vec<PathBuf>,
) -> Result<(), PipelineError> {
    let stem = file_stem(&model.building_id);
    let categories = model.dim() / HOURS_PER_DAY;
    let mut panels = Vec::new();
    for j in 0..top.min(model.dim()) {
        let v: Vec<f64> = model.eigenvectors.column(j).iter().copied().collect();
        let grid = grid_rows(&v, categories);
        let path = dir.join(format!("eigenbehaviors_{stem}_{}.csv", j + 1));
        let mut w = csv_writer(&path)?;
        w.write_record(hour_headers())?;
        for row in &grid {
            w.write_record(row.iter().map(f64::to_string))?;
        }
        finish(&path, w)?;
        written.push(path);
        panels.push((format!("eigenbehavior {} ({:.1}%)", j + 1, 100.0 * model.explained[j]), grid));
    }
    let svg_path = dir.join(format!("eigenbehaviors_{stem}.svg"));
    let doc = svg::heatmaps(
        &format!("Leading eigenbehaviors, {}", model.building_id),
        &panels,
        &category_names(categories),
    );
    write_text(&svg_path, &doc)?;
    written.push(svg_path);
    Ok(())
}

/// Color slot of a signed class: `+j` and `-j` get neighbouring slots.
fn class_slot(assigned: usize, polarity: i8) -> usize {
    2 * (assigned - 1) + usize::from(polarity < 0)
}

fn classification_figures(
    dir: &Path,
    id: &str,
    days: &[&ClassifiedDay],
    written: &mut Vec<PathBuf>,
) -> Result<(), PipelineError> {
    let stem = file_stem(id);
    let mut months: BTreeMap<(i32, u32), Vec<&ClassifiedDay>> = BTreeMap::new();
    for d in days {
        months.entry((d.date.year(), d.date.month())).or_default().push(d);
    }
    let mut strips = Vec::new();
    let mut max_assigned = 1;
    for ((y, m), entries) in &months {
        let path = dir.join(format!("classification_{stem}_{y:04}-{m:02}.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(["date", "assigned", "polarity"])?;
        let mut cells = vec![None; 31];
        for d in entries {
            w.write_record([d.date.to_string(), d.assigned.to_string(), d.polarity.to_string()])?;
            cells[d.date.day0() as usize] = Some(class_slot(d.assigned, d.polarity));
            max_assigned = max_assigned.max(d.assigned);
        }
        finish(&path, w)?;
        written.push(path);
        strips.push((format!("{y:04}-{m:02}"), cells));
    }
    let legend: Vec<String> = (1..=max_assigned)
        .flat_map(|j| [format!("+{j}"), format!("-{j}")])
        .collect();
    let svg_path = dir.join(format!("classification_{stem}.svg"));
    write_text(
        &svg_path,
        &svg::strips(&format!("Day classification, {id}"), &strips, &legend),
    )?;
    written.push(svg_path);
    Ok(())
}

fn embedding_figure(
    dir: &Path,
    embedding_path: &Path,
    clusters_path: &Path,
    profiles: &[ProfileRow],
    written: &mut Vec<PathBuf>,
) -> Result<(), PipelineError> {
    let embedding = read_embedding_csv(embedding_path)?;
    let clusters = read_clusters_csv(clusters_path)?;
    let profile_of: BTreeMap<&str, &str> = clusters
        .iter()
        .map(|c| (c.building_id.as_str(), c.profile.as_str()))
        .collect();
    let slot: BTreeMap<&str, usize> = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| (p.profile.as_str(), i))
        .collect();

    let path = dir.join("embedding_scatter.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["kind", "id", "profile", "x", "y"])?;
    let mut points = Vec::new();
    let mut sums: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, 0); profiles.len()];
    for (id, c) in embedding.building_ids.iter().zip(&embedding.coords) {
        let profile = profile_of.get(id.as_str()).copied().ok_or_else(|| {
            PipelineError::Data(format!("embedded building {id:?} is missing from {}", clusters_path.display()))
        })?;
        let s = *slot
            .get(profile)
            .ok_or_else(|| PipelineError::Data(format!("unknown profile {profile:?}")))?;
        w.write_record(["building", id.as_str(), profile, &c[0].to_string(), &c[1].to_string()])?;
        points.push((c[0], c[1], s));
        sums[s].0 += c[0];
        sums[s].1 += c[1];
        sums[s].2 += 1;
    }
    // centroids of each profile in the embedded plane
    let mut centroids = Vec::new();
    for (p, &(sx, sy, n)) in profiles.iter().zip(&sums) {
        if n == 0 {
            continue;
        }
        let (x, y) = (sx / n as f64, sy / n as f64);
        w.write_record(["centroid", p.profile.as_str(), p.profile.as_str(), &x.to_string(), &y.to_string()])?;
        centroids.push((x, y));
    }
    finish(&path, w)?;
    written.push(path);

    let svg_path = dir.join("embedding_scatter.svg");
    let legend: Vec<String> = profiles.iter().map(|p| p.profile.clone()).collect();
    write_text(
        &svg_path,
        &svg::scatter("Primary eigenbehaviors, embedded", &points, &centroids, &legend),
    )?;
    written.push(svg_path);
    Ok(())
}

fn profile_figure(dir: &Path, profiles: &[ProfileRow], written: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    let path = dir.join("profile_medians.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["profile", "category", "hour", "value"])?;
    let categories = profiles.first().map_or(0, |p| p.median.len() / HOURS_PER_DAY);
    let names = category_names(categories);
    let mut panels = Vec::new();
    for p in profiles {
        let mut series = Vec::new();
        for (c, row) in grid_rows(&p.median, categories).iter().enumerate() {
            let mut pts = Vec::new();
            for (h, v) in row.iter().enumerate() {
                w.write_record([p.profile.as_str(), names[c].as_str(), &h.to_string(), &v.to_string()])?;
                pts.push((h as f64, *v));
            }
            series.push((names[c].clone(), pts));
        }
        panels.push((format!("{} ({} buildings)", p.profile, p.members), series));
    }
    finish(&path, w)?;
    written.push(path);

    let svg_path = dir.join("profile_medians.svg");
    write_text(
        &svg_path,
        &svg::line_panels("Median primary eigenbehavior per profile", &panels, "hour", "weight"),
    )?;
    written.push(svg_path);
    Ok(())
}

/// Write the figure files into `out/figures` and return their paths.
pub fn report_figures(out: &Path, opts: &ReportOptions) -> Result<Vec<PathBuf>, PipelineError> {
    let models_path = require(out, MODELS)?;
    let classes_path = require(out, DAY_CLASSIFICATION)?;
    let embedding_path = require(out, EMBEDDING)?;
    let clusters_path = require(out, CLUSTERS)?;
    let profiles_path = require(out, PROFILES)?;

    let models = read_models_jsonl(&models_path)?;
    let selected: Vec<&EigenModel> = if opts.buildings.is_empty() {
        models.iter().take(opts.max_buildings).collect()
    } else {
        opts.buildings
            .iter()
            .map(|id| {
                models
                    .iter()
                    .find(|m| &m.building_id == id)
                    .ok_or_else(|| PipelineError::Data(format!("no fitted model for building {id:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    let classified = read_classifications_csv(&classes_path)?;
    let profiles = read_profiles_csv(&profiles_path)?;

    let dir = out.join(FIGURES);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;

    let mut written = Vec::new();
    for model in &selected {
        explained_figure(&dir, model, &mut written)?;
        eigenbehavior_figures(&dir, model, opts.top, &mut written)?;
        let days: Vec<&ClassifiedDay> = classified
            .iter()
            .filter(|d| d.building_id == model.building_id)
            .collect();
        classification_figures(&dir, &model.building_id, &days, &mut written)?;
    }
    embedding_figure(&dir, &embedding_path, &clusters_path, &profiles, &mut written)?;
    profile_figure(&dir, &profiles, &mut written)?;
    Ok(written)
}
