use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use levelstereo::evaluation::{bad4, build_eval_region, occlusion_f1};
use levelstereo::geometry::ShapeModel;
use levelstereo::grid::{Mask, ScalarField};
use levelstereo::io::{
    boundary_overlay, encode_gray_png, encode_mask_png, encode_pfm, encode_rgb_png, parse_config, read_mask, read_pfm,
    scaled_disparity_png, GtView, RunConfig, SceneBundle,
};
use levelstereo::signals::synth::{generate_scene, Figure, SceneSpec};
use levelstereo::signals::{CostVolume, Signals};
use levelstereo::solver::{self, EllipseInit, RunStatus};
use log::{info, warn};
use serde_json::json;

use crate::manifest::{sha256_bytes, Conversion, FileEntry, Metrics, OutputEntry, RunManifest, Shape};
use crate::output::{metrics_csv, trace_csv, write, MetricsRow};
use crate::{ConfigArgs, CostvolArgs, EvalArgs, RunArgs, ShapeArg, SynthArgs};

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            parse_config(&text).with_context(|| format!("in config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    for a in &args.overrides {
        cfg.set_assignment(a).with_context(|| format!("in --set {a}"))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_ellipse(text: &str) -> Result<EllipseInit> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("--init-ellipse expects four numbers cx,cy,a,b, got {text:?}"))?;
    ensure!(
        v.len() == 4,
        "--init-ellipse expects four numbers cx,cy,a,b, got {}",
        v.len()
    );
    Ok(EllipseInit {
        center: (v[0], v[1]),
        semi_axes: (v[2], v[3]),
    })
}

fn shape_summary(s: &ShapeModel, w: usize, h: usize) -> Shape {
    Shape {
        coeffs: s.coeffs,
        center_value: s.eval((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0),
    }
}

/// Occlusion F1 and bad-4.0 of a prediction against cyclopean ground truth.
fn score(disparity: &ScalarField, occlusion: &Mask, gt: &ScalarField, boundary: &Mask) -> Result<Metrics> {
    ensure!(
        disparity.same_shape(gt) && occlusion.same_shape(gt) && boundary.same_shape(gt),
        "prediction {}x{}, occlusion {}x{}, ground truth {}x{} and boundary {}x{} must agree",
        disparity.width(),
        disparity.height(),
        occlusion.width(),
        occlusion.height(),
        gt.width(),
        gt.height(),
        boundary.width(),
        boundary.height()
    );
    let region = build_eval_region(boundary, gt);
    let f = occlusion_f1(occlusion, &region);
    let b = bad4(disparity, &region);
    if b.is_none() {
        warn!("bad-4.0 is undefined: no mutually visible pixel in the evaluation band");
    }
    Ok(Metrics {
        precision: f.precision,
        recall: f.recall,
        f1: f.f1,
        bad4: b,
        evaluated_pixels: region.evaluated().count(),
    })
}

pub fn run(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let gt = args.gt_disparity.as_deref().map(|p| (p, GtView::from(args.gt_view)));
    let bundle = SceneBundle::load(&args.left, &args.right, args.dmax, gt, args.gt_boundary.as_deref())?;
    let (w, h) = (bundle.pair.width(), bundle.pair.height());
    let init = match &args.init_ellipse {
        Some(t) => parse_ellipse(t)?,
        None => EllipseInit::centered(w, h, 0.5),
    };

    let started = Instant::now();
    let signals = Signals::build(&bundle.pair, cfg.signals.edge_threshold, cfg.signals.gradient_threshold)?;
    let result = solver::run(&signals, init, &cfg.solver)?;
    let wall = started.elapsed().as_secs_f64();
    info!(
        "{} after {} iterations in {:.1} s",
        result.status.name(),
        result.iterations,
        wall
    );
    if result.status == RunStatus::DegenerateBoundary {
        warn!("the figure boundary vanished; outputs describe a single-region solution");
    }

    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let artifacts: Vec<(&str, Vec<u8>)> = vec![
        ("disparity.pfm", encode_pfm(&result.disparity)),
        (
            "disparity.png",
            encode_gray_png(&scaled_disparity_png(&result.disparity, args.dmax)),
        ),
        ("occlusion.png", encode_mask_png(&result.occlusion)),
        (
            "overlay.png",
            encode_rgb_png(
                w,
                h,
                &boundary_overlay(&bundle.pair.left, &result.phi, &result.occlusion),
            ),
        ),
        ("phi.pfm", encode_pfm(&result.phi)),
        ("trace.csv", trace_csv(&result.trace)?),
        ("config.txt", cfg.to_text().into_bytes()),
    ];
    let mut outputs = Vec::new();
    for (name, bytes) in &artifacts {
        write(&out.join(name), bytes)?;
        outputs.push(OutputEntry {
            name: name.to_string(),
            sha256: Some(sha256_bytes(bytes)),
        });
    }

    let metrics = match (&bundle.gt_disparity, bundle.boundary()) {
        (Some(gt), Some(boundary)) => {
            let m = score(&result.disparity, &result.occlusion, gt, &boundary)?;
            let scene_id = args.scene_id.clone().unwrap_or_else(|| scene_name(&args.left));
            let csv = metrics_csv(&MetricsRow {
                scene_id: &scene_id,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                bad4: m.bad4,
                iterations: Some(result.iterations),
                wall_time: Some(wall),
            })?;
            write(&out.join("metrics.csv"), &csv)?;
            // Holds wall time, so it is listed without a hash.
            outputs.push(OutputEntry {
                name: "metrics.csv".into(),
                sha256: None,
            });
            info!("occlusion F1 {:.4}, bad-4.0 {:?}", m.f1, m.bad4);
            Some(m)
        }
        _ => None,
    };

    let mut inputs = vec![
        FileEntry::input("left", &args.left)?,
        FileEntry::input("right", &args.right)?,
    ];
    if let Some(p) = &args.gt_disparity {
        inputs.push(FileEntry::input("gt_disparity", p)?);
    }
    if let Some(p) = &args.gt_boundary {
        inputs.push(FileEntry::input("gt_boundary", p)?);
    }
    let manifest = RunManifest {
        tool: "levelstereo",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect::<BTreeMap<_, _>>(),
        d_max: args.dmax,
        init_ellipse: [init.center.0, init.center.1, init.semi_axes.0, init.semi_axes.1],
        inputs,
        gt_view: bundle.gt_view.map(|v| v.name()),
        gt_conversion: bundle.conversion.map(|c| Conversion {
            filled: c.filled,
            holes: c.holes,
            conflicts: c.conflicts,
            out_of_bounds: c.out_of_bounds,
        }),
        outputs,
        trace: "trace.csv".into(),
        disparity_png_scale: 255.0 / args.dmax as f64,
        status: result.status.name(),
        iterations: result.iterations,
        theta_foreground: shape_summary(&result.theta1, w, h),
        theta_background: shape_summary(&result.theta2, w, h),
        metrics,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write(&out.join("manifest.json"), text.as_bytes())
}

fn scene_name(left: &Path) -> String {
    left.parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    ensure!(
        args.fraction > 0.0 && args.fraction < 1.0,
        "--fraction must lie in (0, 1)"
    );
    let figure = match args.shape {
        ShapeArg::Ellipse => Figure::centered_ellipse(args.width, args.height, args.fraction),
        ShapeArg::Rect => Figure::centered_rect(args.width, args.height, args.fraction),
    };
    let d_max = args.dmax.unwrap_or(args.dfg.max(args.dbg).ceil() as usize + 12);
    let spec = SceneSpec::planar(args.width, args.height, args.dfg, args.dbg, figure, args.seed).with_d_max(d_max);
    let scene = generate_scene(&spec)?;
    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("left.png"), &encode_gray_png(&scene.pair.left.luminance()))?;
    write(&out.join("right.png"), &encode_gray_png(&scene.pair.right.luminance()))?;
    write(&out.join("gt_disparity.pfm"), &encode_pfm(&scene.gt_disparity))?;
    write(&out.join("gt_boundary.png"), &encode_mask_png(&scene.gt_boundary))?;
    write(&out.join("gt_occlusion.png"), &encode_mask_png(&scene.gt_occlusion))?;
    write(&out.join("gt_foreground.png"), &encode_mask_png(&scene.gt_foreground))?;
    // Random dots put an edge at nearly every pixel, so the monocular cue
    // carries no boundary information; a vanishing threshold makes it flat.
    write(
        &out.join("suggested.cfg"),
        b"# random-dot texture: treat every pixel as an edge (flat monocular cue)\nedge_threshold = 1e-9\n",
    )?;
    let meta = json!({
        "width": args.width,
        "height": args.height,
        "d_fg": args.dfg,
        "d_bg": args.dbg,
        "d_max": d_max,
        "shape": match args.shape { ShapeArg::Ellipse => "ellipse", ShapeArg::Rect => "rect" },
        "fraction": args.fraction,
        "seed": args.seed,
        "gt_view": "cyclopean",
    });
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    write(&out.join("scene.json"), text.as_bytes())?;
    info!("scene written to {} (d_max {d_max})", out.display());
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let pred = read_pfm(&args.pred_disparity)?;
    let occ = read_mask(&args.pred_occlusion)?;
    let raw = read_pfm(&args.gt_disparity)?;
    let gt = match GtView::from(args.gt_view) {
        GtView::Cyclopean => raw,
        GtView::Left => levelstereo::io::left_to_cyclopean(&raw).0,
    };
    let boundary = match &args.gt_boundary {
        Some(p) => read_mask(p)?,
        None => levelstereo::evaluation::boundary_from_disparity(&gt),
    };
    let m = score(&pred, &occ, &gt, &boundary)?;
    let csv = metrics_csv(&MetricsRow {
        scene_id: &args.scene_id,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        bad4: m.bad4,
        iterations: None,
        wall_time: None,
    })?;
    match &args.out {
        Some(p) => write(p, &csv),
        None => {
            print!("{}", String::from_utf8(csv)?);
            Ok(())
        }
    }
}

fn volume_bytes(v: &CostVolume) -> Vec<u8> {
    v.values().iter().flat_map(|&x| (x as f32).to_le_bytes()).collect()
}

pub fn costvol(args: CostvolArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let bundle = SceneBundle::load(&args.left, &args.right, args.dmax, None, None)?;
    let p = cfg.signals;
    let s = Signals::build(&bundle.pair, p.edge_threshold, p.gradient_threshold)?;
    let files: [(&str, &CostVolume); 3] = [
        ("matching.f32", &s.matching),
        ("monocular.f32", &s.monocular),
        ("occlusion.f32", &s.occlusion),
    ];
    let out: &PathBuf = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, v) in files {
        if v.values().iter().any(|x| !x.is_finite()) {
            bail!("{name} contains non-finite values");
        }
        write(&out.join(name), &volume_bytes(v))?;
    }
    let meta = json!({
        "width": s.width(),
        "height": s.height(),
        "depth": s.d_max() + 1,
        "d_max": s.d_max(),
        "dtype": "f32le",
        "layout": "row-major [y][x][d], disparity fastest",
        "files": { "matching": "matching.f32", "monocular": "monocular.f32", "occlusion": "occlusion.f32" },
        "edge_threshold": p.edge_threshold,
        "gradient_threshold": p.gradient_threshold,
    });
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    write(&out.join("costvol.json"), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipse_argument() {
        let e = parse_ellipse("10, 20.5,3,4").unwrap();
        assert_eq!((e.center, e.semi_axes), ((10.0, 20.5), (3.0, 4.0)));
        assert!(parse_ellipse("1,2,3").is_err());
        assert!(parse_ellipse("1,2,x,4").is_err());
    }
}
