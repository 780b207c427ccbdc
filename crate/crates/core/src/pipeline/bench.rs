use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{stage_stats, StageStats, StageTimings, STAGES};
use super::{ms, Pipeline};
use crate::dataset::HazardRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub repeats: usize,
    /// Leading passes left out of the statistics.
    pub warmup: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { repeats: 3, warmup: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub samples: usize,
    pub errors: usize,
    /// Images divided by the summed wall time of the measured passes.
    pub fps: f64,
    pub stages: BTreeMap<String, StageStats>,
    /// Variance across passes of each pass's stage mean.
    pub pass_variance_ms2: BTreeMap<String, f64>,
}

impl ModeStats {
    pub fn mean(&self, stage: &str) -> f64 {
        self.stages.get(stage).map_or(0.0, |s| s.mean_ms)
    }
}

/// Guided minus baseline, per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overhead {
    /// Difference of mean end-to-end per-image times.
    pub total_ms: f64,
    pub per_stage_ms: BTreeMap<String, f64>,
    /// Difference of the detect and encode stage means.
    pub detect_encode_ms: f64,
    /// `|total_ms - detect_encode_ms| / detect_encode_ms`.
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub images: usize,
    pub options: BenchOptions,
    pub baseline: ModeStats,
    pub guided: ModeStats,
    pub overhead: Overhead,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{} images x {} passes ({} warmup)\n{:<13} {:>12} {:>12} {:>12}\n",
            self.images, self.options.repeats, self.options.warmup, "stage (ms)", "baseline", "guided", "overhead"
        );
        for s in STAGES.iter().chain(&["total"]) {
            out.push_str(&format!(
                "{:<13} {:>12.4} {:>12.4} {:>+12.4}\n",
                s,
                self.baseline.mean(s),
                self.guided.mean(s),
                self.overhead
                    .per_stage_ms
                    .get(*s)
                    .copied()
                    .unwrap_or(self.overhead.total_ms)
            ));
        }
        out.push_str(&format!(
            "FPS baseline {:.2}, guided {:.2}\ndetect+encode overhead {:.4} ms of {:.4} ms total ({:.2}% gap)\n",
            self.baseline.fps,
            self.guided.fps,
            self.overhead.detect_encode_ms,
            self.overhead.total_ms,
            self.overhead.relative_gap * 100.0
        ));
        out
    }
}

struct Collector {
    timings: Vec<StageTimings>,
    pass_means: BTreeMap<String, Vec<f64>>,
    errors: usize,
    wall_ms: f64,
    images: usize,
}

impl Collector {
    fn new() -> Self {
        Self {
            timings: Vec::new(),
            pass_means: BTreeMap::new(),
            errors: 0,
            wall_ms: 0.0,
            images: 0,
        }
    }

    fn finish(self) -> ModeStats {
        let pass_variance_ms2 = self
            .pass_means
            .into_iter()
            .map(|(k, v)| {
                let n = v.len().max(1) as f64;
                let m = v.iter().sum::<f64>() / n;
                (k, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
            })
            .collect();
        ModeStats {
            samples: self.timings.len(),
            errors: self.errors,
            fps: if self.wall_ms > 0.0 {
                self.images as f64 / (self.wall_ms / 1e3)
            } else {
                0.0
            },
            stages: stage_stats(&self.timings),
            pass_variance_ms2,
        }
    }
}

fn pass(p: &Pipeline, inputs: &[(&HazardRecord, Vec<u8>)], into: Option<&mut Collector>) {
    let start = Instant::now();
    let processed: Vec<_> = inputs
        .iter()
        .map(|(r, bytes)| p.process_with(r, bytes, false))
        .collect();
    let wall = ms(start.elapsed());
    let Some(c) = into else { return };
    c.wall_ms += wall;
    c.images += processed.len();
    let ok: Vec<StageTimings> = processed
        .iter()
        .filter(|x| x.result.is_ok())
        .map(|x| x.timings)
        .collect();
    c.errors += processed.len() - ok.len();
    for (k, s) in stage_stats(&ok) {
        c.pass_means.entry(k).or_default().push(s.mean_ms);
    }
    c.timings.extend(ok);
}

/// Times baseline and guided passes over the same images, alternating
/// which goes first. Rationale scoring is skipped; images are read once up
/// front so file I/O for the images is not timed.
pub fn bench(
    baseline: &Pipeline,
    guided: &Pipeline,
    records: &[HazardRecord],
    images_dir: &Path,
    opts: BenchOptions,
) -> Result<BenchReport> {
    if opts.repeats == 0 {
        return Err(Error::InvalidArgument("bench needs at least one repeat".into()));
    }
    let inputs: Vec<(&HazardRecord, Vec<u8>)> = records
        .iter()
        .map(|r| {
            let path = images_dir.join(&r.image);
            std::fs::read(&path)
                .map(|b| (r, b))
                .map_err(|e| Error::io(format!("reading image {}", path.display()), e))
        })
        .collect::<Result<_>>()?;

    let (mut cb, mut cg) = (Collector::new(), Collector::new());
    for i in 0..opts.warmup + opts.repeats {
        let measured = i >= opts.warmup;
        if i % 2 == 0 {
            pass(baseline, &inputs, measured.then_some(&mut cb));
            pass(guided, &inputs, measured.then_some(&mut cg));
        } else {
            pass(guided, &inputs, measured.then_some(&mut cg));
            pass(baseline, &inputs, measured.then_some(&mut cb));
        }
    }
    let (b, g) = (cb.finish(), cg.finish());
    let per_stage_ms: BTreeMap<String, f64> = STAGES.iter().map(|s| (s.to_string(), g.mean(s) - b.mean(s))).collect();
    let total_ms = g.mean("total") - b.mean("total");
    let detect_encode_ms = per_stage_ms["detect"] + per_stage_ms["encode"];
    let relative_gap = if detect_encode_ms != 0.0 {
        (total_ms - detect_encode_ms).abs() / detect_encode_ms.abs()
    } else {
        f64::INFINITY
    };
    Ok(BenchReport {
        images: inputs.len(),
        options: opts,
        baseline: b,
        guided: g,
        overhead: Overhead {
            total_ms,
            per_stage_ms,
            detect_encode_ms,
            relative_gap,
        },
    })
}
