use serde::Serialize;

use dg_core::formats::encode_points;
use dg_core::jsonl::to_jsonl;
use dg_core::pointcloud::{assemble_scene, lift_features, load_pyramids, load_scan, sparse_sample};

use super::{say, write_output};
use crate::error::{require_file, CliError, CliResult};
use crate::{PointFormat, RunConfig, UnprojectArgs};

#[derive(Serialize)]
struct PointRecord<'a> {
    xyz: [f64; 3],
    view: u32,
    u: u32,
    v: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    view_count: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<&'a [f64]>,
}

pub fn unproject(cfg: &RunConfig, args: &UnprojectArgs) -> CliResult<()> {
    require_file(&args.scene)?;
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err(CliError::Config(format!(
            "--ratio {} outside (0, 1]",
            args.ratio
        )));
    }
    if args.lift_scale == Some(0) {
        return Err(CliError::Config("--lift-scale is 1-based".into()));
    }
    let scan = load_scan(&args.scene)?;
    let full = assemble_scene(&scan)?;
    let mut pc = sparse_sample(&full, args.ratio, cfg.seed)?;
    let mut counts = None;
    if let Some(scale) = args.lift_scale {
        let lifted = lift_features(&pc, &scan, &load_pyramids(&scan)?, scale)?;
        pc = pc.with_features(lifted.features)?;
        counts = Some(lifted.view_counts);
    }

    let bytes = match args.format {
        PointFormat::Bin => encode_points(pc.points(), pc.features())?,
        PointFormat::Jsonl => {
            let sources = pc.sources().expect("assembled clouds record sources");
            let records: Vec<PointRecord> = pc
                .points()
                .iter()
                .zip(sources)
                .enumerate()
                .map(|(i, (&xyz, s))| PointRecord {
                    xyz,
                    view: s.view,
                    u: s.u,
                    v: s.v,
                    view_count: counts.as_ref().map(|c| c[i]),
                    features: pc.features().map(|f| f.row(i)),
                })
                .collect();
            to_jsonl(&records).into_bytes()
        }
    };
    write_output(&args.out, &bytes)?;
    say(
        cfg,
        format!(
            "unproject: {} of {} points kept from {} views",
            pc.len(),
            full.len(),
            scan.views.len()
        ),
    );
    Ok(())
}
