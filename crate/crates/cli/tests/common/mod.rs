//! Deterministic on-disk fixtures and a runner for the `dg` binary.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dg_core::formats::{write_depth, write_pyramid};
use dg_core::geometry::{Box9DoF, DepthImage, RigidTransform};
use dg_core::hsse::FeaturePyramid;
use dg_core::jsonl::to_jsonl;
use dg_core::lse::Annotation;
use dg_core::nncore::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const SCENE_ID: &str = "scene0000";
pub const WIDTH: u32 = 40;
pub const HEIGHT: u32 = 30;
/// Channel width of the fixture pyramids and of [`HSSE_CONFIG`].
pub const CHANNELS: usize = 8;
/// Leaves scene layers and pooled size at their defaults.
pub const HSSE_CONFIG: &str = r#"{"channels": 8, "heads": 2}"#;

pub fn dg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dg"))
        .args(args)
        .env_remove("DG_LLM_API_KEY")
        .output()
        .expect("dg runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn boxed(v: [f64; 9]) -> Box9DoF {
    Box9DoF::from_array(v).unwrap()
}

fn ann(id: &str, scene: &str, text: &str, class: &str, b: [f64; 9]) -> Annotation {
    Annotation {
        desc_id: id.into(),
        scene_id: scene.into(),
        text: text.into(),
        target_class: class.into(),
        anchor_classes: vec![],
        target_box: Some(boxed(b)),
    }
}

pub fn annotations() -> Vec<Annotation> {
    let s1 = "scene0001";
    vec![
        ann(
            "d00",
            SCENE_ID,
            "the chair on the left of the table",
            "chair",
            [0.5, 0.2, 2.4, 0.5, 0.5, 0.9, 0.1, 0.0, 0.0],
        ),
        ann(
            "d01",
            SCENE_ID,
            "the chair closest to the window",
            "chair",
            [1.4, 0.2, 2.6, 0.5, 0.5, 0.9, -0.3, 0.0, 0.0],
        ),
        ann(
            "d02",
            SCENE_ID,
            "the chair facing the door",
            "chair",
            [-0.8, 0.1, 3.0, 0.5, 0.6, 0.9, 1.2, 0.0, 0.0],
        ),
        ann(
            "d03",
            SCENE_ID,
            "the wooden table between the chairs",
            "table",
            [0.9, 0.0, 2.5, 1.2, 0.8, 0.75, 0.0, 0.0, 0.0],
        ),
        ann(
            "d04",
            SCENE_ID,
            "the lamp behind the sofa",
            "lamp",
            [-1.5, 0.8, 3.6, 0.3, 0.3, 1.6, 0.0, 0.0, 0.0],
        ),
        ann(
            "d05",
            SCENE_ID,
            "the small door near the lamp",
            "door",
            [-2.0, 0.0, 4.0, 0.9, 0.1, 2.0, 0.5, 0.0, 0.0],
        ),
        ann(
            "d06",
            s1,
            "the sofa against the wall",
            "sofa",
            [0.0, -0.5, 3.0, 2.0, 0.9, 0.8, 0.0, 0.0, 0.0],
        ),
        ann(
            "d07",
            s1,
            "the plant to the right of the sofa",
            "plant",
            [1.3, -0.5, 3.0, 0.4, 0.4, 1.0, 0.0, 0.2, 0.0],
        ),
    ]
}

pub fn scenes_jsonl() -> String {
    let obj = |class: &str, b: [f64; 9]| json!({"class": class, "box": b});
    let anns = annotations();
    let b = |i: usize| anns[i].target_box.unwrap().to_array();
    let lines = [
        json!({"scene_id": SCENE_ID, "objects": [
            obj("chair", b(0)), obj("chair", b(1)), obj("chair", b(2)), obj("table", b(3)),
            obj("lamp", b(4)), obj("door", b(5)), obj("sofa", [-1.5, 0.0, 4.2, 2.0, 0.9, 0.8, 0.0, 0.0, 0.0]),
        ]}),
        json!({"scene_id": "scene0001", "objects": [obj("sofa", b(6)), obj("plant", b(7))]}),
    ];
    lines.iter().map(|l| format!("{l}\n")).collect()
}

/// Predictions near each target box, with the last one missing.
pub fn synthetic_predictions(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anns = annotations();
    let mut out = String::new();
    for (i, a) in anns.iter().enumerate() {
        let pred = (i + 1 < anns.len()).then(|| {
            let mut v = a.target_box.unwrap().to_array();
            for k in 0..3 {
                v[k] += rng.gen_range(-0.45..0.45) * v[k + 3];
            }
            v[6] += rng.gen_range(-0.3..0.3);
            v
        });
        out.push_str(&json!({"desc_id": a.desc_id, "pred_box": pred}).to_string());
        out.push('\n');
    }
    out
}

fn depth(view: usize) -> DepthImage {
    let mut d = DepthImage::filled(WIDTH, HEIGHT, 0.0);
    for v in 0..HEIGHT {
        for u in 0..WIDTH {
            if !(u + v + view as u32).is_multiple_of(17) {
                d.set(
                    u,
                    v,
                    2.0 + 0.02 * u as f32 + 0.01 * v as f32 + 0.1 * view as f32,
                );
            }
        }
    }
    d
}

fn pyramid(view: usize) -> FeaturePyramid {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + view as u64);
    FeaturePyramid::new(vec![
        Tensor::uniform([5, 6, CHANNELS], 1.0, &mut rng),
        Tensor::uniform([10, 12, CHANNELS], 1.0, &mut rng),
    ])
    .unwrap()
}

/// Input files of one end-to-end run.
pub struct Fixture {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub annotations: PathBuf,
    pub scenes: PathBuf,
    pub hsse_config: PathBuf,
}

pub fn write_fixture(dir: &Path) -> Fixture {
    let scan = dir.join("scan");
    fs::create_dir_all(&scan).unwrap();
    let k = [30.0, 30.0, 19.5, 14.5, f64::from(WIDTH), f64::from(HEIGHT)];
    let mut views = Vec::new();
    for v in 0..2 {
        write_depth(&scan.join(format!("view{v}.dgd")), &depth(v)).unwrap();
        write_pyramid(&scan.join(format!("view{v}.dgf")), &pyramid(v)).unwrap();
        let t_d =
            RigidTransform::from_euler([0.1 * v as f64, 0.0, 0.0], [0.3 * v as f64, 0.0, 0.0]);
        let t_i = RigidTransform::from_euler(
            [0.1 * v as f64, 0.0, 0.0],
            [0.3 * v as f64 + 0.02, 0.0, 0.0],
        );
        views.push(json!({
            "rgb_features": format!("view{v}.dgf"),
            "depth": format!("view{v}.dgd"),
            "K_I": k, "K_D": k,
            "T_I": t_i.to_row_major_3x4(), "T_D": t_d.to_row_major_3x4(),
        }));
    }
    let manifest = scan.join("manifest.json");
    let m = json!({"scene_id": SCENE_ID, "views": views});
    fs::write(&manifest, serde_json::to_string_pretty(&m).unwrap()).unwrap();

    let annotations = dir.join("annotations.jsonl");
    fs::write(&annotations, to_jsonl(&self::annotations())).unwrap();
    let scenes = dir.join("scenes.jsonl");
    fs::write(&scenes, scenes_jsonl()).unwrap();
    let hsse_config = dir.join("hsse.json");
    fs::write(&hsse_config, HSSE_CONFIG).unwrap();
    Fixture {
        dir: dir.to_path_buf(),
        manifest,
        annotations,
        scenes,
        hsse_config,
    }
}
