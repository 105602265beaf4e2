//! Flat `key=value` configuration files.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Unknown keys are errors so a typo cannot silently fall back to a
//! default. Numeric ranges are validated at load time.

use crate::CliError;
use drt_core::synth::{Motion, OcclusionSpec, ScaleSchedule, SynthSpec};
use drt_core::tracker::TrackConfig;
use std::fmt::Display;
use std::str::FromStr;

/// Splits a config file into `(line number, key, value)` triples.
fn assignments(text: &str) -> Result<Vec<(usize, &str, &str)>, CliError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Input(format!(
                "config line {}: expected key=value, got `{line}`",
                idx + 1
            )));
        };
        out.push((idx + 1, key.trim(), value.trim()));
    }
    Ok(out)
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value.parse().map_err(|e| {
        CliError::Input(format!("config line {line}: {key} = `{value}`: {e}"))
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(CliError::Input(format!(
            "config line {line}: {key} = `{value}` is not a boolean (true/false)"
        ))),
    }
}

/// Tracker configuration over [`TrackConfig::default`]. The ablation
/// variant is a command-line flag, not a config key.
pub fn parse_track_config(text: &str) -> Result<TrackConfig, CliError> {
    let mut cfg = TrackConfig::default();
    for (line, key, value) in assignments(text)? {
        match key {
            "eta" => cfg.learn.eta = parse(line, key, value)?,
            "gamma" => cfg.learn.gamma = parse(line, key, value)?,
            "theta_min" => cfg.learn.theta_min = parse(line, key, value)?,
            "theta_max" => cfg.learn.theta_max = parse(line, key, value)?,
            "cg_iters" => cfg.learn.cg_iters = parse(line, key, value)?,
            "cg_tol" => cfg.learn.cg_tol = parse(line, key, value)?,
            "alternations" => cfg.learn.alternations = parse(line, key, value)?,
            "scales" => cfg.scales = parse(line, key, value)?,
            "scale_step" => cfg.scale_step = parse(line, key, value)?,
            "update_interval" => cfg.update_interval = parse(line, key, value)?,
            "cell_size" => cfg.cell_size = parse(line, key, value)?,
            "padding" => cfg.padding = parse(line, key, value)?,
            "grid" => cfg.grid = parse(line, key, value)?,
            "memory_capacity" => cfg.memory_capacity = parse(line, key, value)?,
            "omega_early" => cfg.omega_early = parse(line, key, value)?,
            "omega_late" => cfg.omega_late = parse(line, key, value)?,
            "omega_switch_frame" => cfg.omega_switch_frame = parse(line, key, value)?,
            "first_cg_iters" => cfg.first_cg_iters = parse(line, key, value)?,
            "first_alternations" => cfg.first_alternations = parse(line, key, value)?,
            _ => {
                return Err(CliError::Input(format!(
                    "config line {line}: unknown key `{key}`"
                )))
            }
        }
    }
    cfg.validate()
        .map_err(|e| CliError::Input(format!("config: {e}")))?;
    Ok(cfg)
}

/// Raw synthetic-spec fields accumulated before assembly, since motion and
/// occlusion are spread over several keys.
#[derive(Default)]
struct SynthBuilder {
    motion: Option<String>,
    vx: Option<f64>,
    vy: Option<f64>,
    amp_x: Option<f64>,
    amp_y: Option<f64>,
    period: Option<f64>,
    occ_x: Option<f64>,
    occ_y: Option<f64>,
    occ_w: Option<f64>,
    occ_h: Option<f64>,
    occ_first: Option<usize>,
    occ_last: Option<usize>,
}

/// Synthetic-sequence spec over a centered static default: 192x160 frame,
/// 48x40 target, 50 frames, seed 1.
pub fn parse_synth_spec(text: &str) -> Result<SynthSpec, CliError> {
    let mut spec = SynthSpec::centered((192, 160), (48.0, 40.0), 50, 1);
    let mut b = SynthBuilder::default();
    let mut center_overridden = (false, false);
    for (line, key, value) in assignments(text)? {
        match key {
            "frame_w" => spec.frame_size.0 = parse(line, key, value)?,
            "frame_h" => spec.frame_size.1 = parse(line, key, value)?,
            "target_w" => spec.target_size.0 = parse(line, key, value)?,
            "target_h" => spec.target_size.1 = parse(line, key, value)?,
            "start_cx" => {
                spec.start_center.0 = parse(line, key, value)?;
                center_overridden.0 = true;
            }
            "start_cy" => {
                spec.start_center.1 = parse(line, key, value)?;
                center_overridden.1 = true;
            }
            "motion" => b.motion = Some(value.to_string()),
            "vx" => b.vx = Some(parse(line, key, value)?),
            "vy" => b.vy = Some(parse(line, key, value)?),
            "amp_x" => b.amp_x = Some(parse(line, key, value)?),
            "amp_y" => b.amp_y = Some(parse(line, key, value)?),
            "period" => b.period = Some(parse(line, key, value)?),
            "scale_ramp" => {
                let per_frame: f64 = parse(line, key, value)?;
                spec.scale = if per_frame == 1.0 {
                    ScaleSchedule::Constant
                } else {
                    ScaleSchedule::Ramp { per_frame }
                };
            }
            "occ_x" => b.occ_x = Some(parse(line, key, value)?),
            "occ_y" => b.occ_y = Some(parse(line, key, value)?),
            "occ_w" => b.occ_w = Some(parse(line, key, value)?),
            "occ_h" => b.occ_h = Some(parse(line, key, value)?),
            "occ_first" => b.occ_first = Some(parse(line, key, value)?),
            "occ_last" => b.occ_last = Some(parse(line, key, value)?),
            "frozen_background" => spec.frozen_background = parse_bool(line, key, value)?,
            "frozen_occluder" => spec.frozen_occluder = parse_bool(line, key, value)?,
            "texture_tiles" => spec.texture_tiles = Some(parse(line, key, value)?),
            "noise_sigma" => spec.noise_sigma = parse(line, key, value)?,
            "seed" => spec.seed = parse(line, key, value)?,
            "length" => spec.length = parse(line, key, value)?,
            _ => {
                return Err(CliError::Input(format!(
                    "spec line {line}: unknown key `{key}`"
                )))
            }
        }
    }
    // A frame-size override moves the default centered start with it.
    if !center_overridden.0 {
        spec.start_center.0 = spec.frame_size.0 as f64 / 2.0;
    }
    if !center_overridden.1 {
        spec.start_center.1 = spec.frame_size.1 as f64 / 2.0;
    }
    spec.motion = build_motion(&b)?;
    spec.occlusion = build_occlusion(&b)?;
    Ok(spec)
}

fn build_motion(b: &SynthBuilder) -> Result<Motion, CliError> {
    let kind = b.motion.as_deref().unwrap_or("static");
    let velocity_keys = b.vx.is_some() || b.vy.is_some();
    let sinus_keys = b.amp_x.is_some() || b.amp_y.is_some() || b.period.is_some();
    match kind {
        "static" => {
            if velocity_keys || sinus_keys {
                return Err(CliError::Input(
                    "spec: motion parameters given for motion = static".into(),
                ));
            }
            Ok(Motion::Static)
        }
        "velocity" => {
            if sinus_keys {
                return Err(CliError::Input(
                    "spec: amp_x/amp_y/period apply to motion = sinusoidal".into(),
                ));
            }
            Ok(Motion::ConstantVelocity {
                vx: b.vx.unwrap_or(0.0),
                vy: b.vy.unwrap_or(0.0),
            })
        }
        "sinusoidal" => {
            if velocity_keys {
                return Err(CliError::Input(
                    "spec: vx/vy apply to motion = velocity".into(),
                ));
            }
            Ok(Motion::Sinusoidal {
                amp_x: b.amp_x.unwrap_or(0.0),
                amp_y: b.amp_y.unwrap_or(0.0),
                period: b.period.ok_or_else(|| {
                    CliError::Input("spec: motion = sinusoidal needs period".into())
                })?,
            })
        }
        other => Err(CliError::Input(format!("spec: unknown motion `{other}`"))),
    }
}

fn build_occlusion(b: &SynthBuilder) -> Result<Option<OcclusionSpec>, CliError> {
    let any = b.occ_x.is_some()
        || b.occ_y.is_some()
        || b.occ_w.is_some()
        || b.occ_h.is_some()
        || b.occ_first.is_some()
        || b.occ_last.is_some();
    if !any {
        return Ok(None);
    }
    let (Some(first), Some(last)) = (b.occ_first, b.occ_last) else {
        return Err(CliError::Input(
            "spec: occlusion needs both occ_first and occ_last".into(),
        ));
    };
    Ok(Some(OcclusionSpec {
        region: (
            b.occ_x.unwrap_or(0.0),
            b.occ_y.unwrap_or(0.0),
            b.occ_w.unwrap_or(0.5),
            b.occ_h.unwrap_or(1.0),
        ),
        first_frame: first,
        last_frame: last,
    }))
}
