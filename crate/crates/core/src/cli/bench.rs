use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::bopstore::encode_features;
use crate::scenegen::{render_view, sample_layout, GenConfig, ModelLibrary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub frames: usize,
    pub workers: usize,
    pub objects: usize,
    pub width: u32,
    pub height: u32,
    pub seconds: f64,
    pub frames_per_sec: f64,
}

/// Annotation throughput: both views rendered with all feature channels,
/// visibility, RGB shading and archive encoding; disk writes excluded.
pub fn run_bench(frames: usize, objects: u32, workers: usize, seed: u64) -> Result<BenchResult, CliError> {
    let rt = |e: String| CliError::Runtime(e);
    let config = GenConfig {
        n_objects: [objects, objects],
        views_per_scene: frames as u32,
        seed,
        ..Default::default()
    };
    config.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let library = ModelLibrary::build(&config.objects, config.region_count).map_err(|e| rt(e.to_string()))?;
    let layout = sample_layout(&config, &library, 0).map_err(|e| rt(e.to_string()))?;
    let rig = layout.rig;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| rt(e.to_string()))?;
    let start = Instant::now();
    pool.install(|| {
        layout.viewpoints.par_iter().try_for_each(|view| -> Result<(), CliError> {
            let right_from_world = rig.extrinsic_l2r.compose(view);
            for (pose, k) in [(*view, rig.left), (right_from_world, rig.right)] {
                let r = render_view(&library, &layout.objects, &pose, &k, layout.texture).map_err(|e| rt(e.to_string()))?;
                encode_features(&r.maps).map_err(|e| rt(e.to_string()))?;
            }
            Ok(())
        })
    })?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(BenchResult {
        frames,
        workers,
        objects: layout.objects.len(),
        width: rig.left.width,
        height: rig.left.height,
        seconds,
        frames_per_sec: frames as f64 / seconds.max(1e-9),
    })
}

/// Error when throughput falls below `gate` times the recorded baseline.
pub fn check_gate(result: &BenchResult, baseline: &BenchResult, gate: f64) -> Result<(), CliError> {
    let floor = gate * baseline.frames_per_sec;
    if result.frames_per_sec < floor {
        return Err(CliError::Runtime(format!(
            "throughput {:.2} frames/s is below {:.0}% of the baseline {:.2} frames/s",
            result.frames_per_sec,
            gate * 100.0,
            baseline.frames_per_sec
        )));
    }
    Ok(())
}
