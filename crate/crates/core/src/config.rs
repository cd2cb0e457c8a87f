//! Scene configuration files.
//!
//! One `key = value` per line; `#` starts a comment. Recognized keys:
//!
//! ```text
//! p, q, n_bins          required, positive integers
//! passes                number of passes K (default 1)
//! r_b                   temporal clutter rank (default min(4, q))
//! sigma2                noise power (default 0.01)
//! texture               constant | inverse-gamma:<shape>
//! calibration           ideal | random-phase:<max radians>   (default random-phase:0.1)
//! gains                 unit | random   (multipass gains, default random)
//! change_fraction       in [0, 1] (default 0)
//! seed                  u64 (default 0)
//! kappa                 spatial phase slope of injected targets (default 0.5)
//! target                <bin> <doppler> <amp_re> <amp_im> [pass]   (repeatable)
//! ```

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::sim::{
    gen_clutter, gen_multipass, Calibration, MultipassConfig, PassGains, PhaseHistory, SceneConfig,
    Target, Texture,
};
use crate::stap::DEFAULT_KAPPA;

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub scene: SceneConfig,
    pub multipass: MultipassConfig,
    pub kappa: f64,
    pub targets: Vec<Target>,
}

impl SimulationConfig {
    /// Generates the cube and injects the configured targets.
    pub fn simulate(&self) -> Result<PhaseHistory> {
        let mut cube = if self.multipass.passes == 1 {
            gen_clutter(&self.scene)?
        } else {
            gen_multipass(&self.scene, &self.multipass)?
        };
        for t in &self.targets {
            cube.inject_target(*t, self.kappa)?;
        }
        Ok(cube)
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| err(line, format!("invalid value {value:?} for {key}: {e}")))
}

pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let mut seen = HashSet::new();
    let (mut p, mut q, mut n_bins) = (None, None, None);
    let mut passes = 1usize;
    let mut r_b = None;
    let mut sigma2 = 0.01;
    let mut texture = Texture::Constant;
    let mut calibration = Calibration::RandomPhase { max_phase: 0.1 };
    let mut gains = PassGains::Random;
    let mut change_fraction = 0.0;
    let mut seed = 0u64;
    let mut kappa = DEFAULT_KAPPA;
    let mut targets = Vec::new();
    let mut target_lines = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected key = value, found {content:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key != "target" && !seen.insert(key.to_string()) {
            return Err(err(line, format!("duplicate key {key}")));
        }
        match key {
            "p" => p = Some(num::<usize>(value, line, key)?),
            "q" => q = Some(num::<usize>(value, line, key)?),
            "n_bins" => n_bins = Some(num::<usize>(value, line, key)?),
            "passes" | "K" => passes = num(value, line, key)?,
            "r_b" => r_b = Some(num::<usize>(value, line, key)?),
            "sigma2" => sigma2 = num(value, line, key)?,
            "seed" => seed = num(value, line, key)?,
            "kappa" => kappa = num(value, line, key)?,
            "change_fraction" => change_fraction = num(value, line, key)?,
            "texture" => {
                texture = match value.split_once(':') {
                    None if value == "constant" => Texture::Constant,
                    Some(("inverse-gamma", shape)) => Texture::InverseGamma {
                        shape: num(shape.trim(), line, key)?,
                    },
                    _ => return Err(err(
                        line,
                        format!(
                            "texture must be constant or inverse-gamma:<shape>, found {value:?}"
                        ),
                    )),
                }
            }
            "calibration" => {
                calibration = match value.split_once(':') {
                    None if value == "ideal" => Calibration::Ideal,
                    Some(("random-phase", max)) => Calibration::RandomPhase {
                        max_phase: num(max.trim(), line, key)?,
                    },
                    _ => return Err(err(
                        line,
                        format!(
                            "calibration must be ideal or random-phase:<radians>, found {value:?}"
                        ),
                    )),
                }
            }
            "gains" => {
                gains = match value {
                    "unit" => PassGains::Unit,
                    "random" => PassGains::Random,
                    _ => {
                        return Err(err(
                            line,
                            format!("gains must be unit or random, found {value:?}"),
                        ))
                    }
                }
            }
            "target" => {
                let fields: Vec<&str> = value.split_whitespace().collect();
                if !(4..=5).contains(&fields.len()) {
                    return Err(err(
                        line,
                        "target needs <bin> <doppler> <amp_re> <amp_im> [pass]",
                    ));
                }
                targets.push(Target {
                    bin: num(fields[0], line, "target bin")?,
                    doppler: num(fields[1], line, "target doppler")?,
                    amplitude: C64::new(
                        num(fields[2], line, "target amplitude")?,
                        num(fields[3], line, "target amplitude")?,
                    ),
                    pass: match fields.get(4) {
                        Some(s) => num(s, line, "target pass")?,
                        None => 0,
                    },
                });
                target_lines.push(line);
            }
            _ => return Err(err(line, format!("unknown key {key}"))),
        }
    }

    let last = text.lines().count().max(1);
    let p = p.ok_or_else(|| err(last, "missing required key p"))?;
    let q = q.ok_or_else(|| err(last, "missing required key q"))?;
    let n_bins = n_bins.ok_or_else(|| err(last, "missing required key n_bins"))?;
    let mut scene = SceneConfig::new(p, q, n_bins);
    if let Some(r) = r_b {
        scene.temporal_rank = r;
    }
    scene.sigma2 = sigma2;
    scene.texture = texture;
    scene.calibration = calibration;
    scene.seed = seed;
    scene
        .validate()
        .map_err(|e| err(last, format!("invalid scene: {e}")))?;
    if passes == 0 {
        return Err(err(last, "passes must be at least 1"));
    }
    if !(0.0..=1.0).contains(&change_fraction) {
        return Err(err(last, "change_fraction must lie in [0, 1]"));
    }
    for (t, &line) in targets.iter().zip(&target_lines) {
        if t.bin >= n_bins || t.pass >= passes {
            return Err(err(
                line,
                format!(
                    "target at pass {} bin {} is outside the cube",
                    t.pass, t.bin
                ),
            ));
        }
        if !t.doppler.is_finite() || !t.amplitude.is_finite() {
            return Err(err(line, "target values must be finite"));
        }
    }
    Ok(SimulationConfig {
        scene,
        multipass: MultipassConfig {
            passes,
            change_fraction,
            gains,
        },
        kappa,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let cfg = parse_config("p = 2\nq = 8\nn_bins = 16\nseed = 1\n").unwrap();
        assert_eq!(
            (cfg.scene.p, cfg.scene.q, cfg.scene.n_bins, cfg.scene.seed),
            (2, 8, 16, 1)
        );
        assert_eq!(cfg.multipass.passes, 1);
        assert!(cfg.targets.is_empty());
        let cube = cfg.simulate().unwrap();
        assert_eq!(cube.n_bins(), 16);
    }

    #[test]
    fn full_config() {
        let text = "\
# two-pass scene
p = 3
q = 16   # pulses
n_bins = 20
passes = 2
r_b = 3
sigma2 = 0.05
texture = inverse-gamma:3.5
calibration = ideal
gains = unit
change_fraction = 0.25
seed = 42
kappa = 2
target = 3 0.25 10 0
target = 5 0.1 0 -2 1
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.scene.temporal_rank, 3);
        assert_eq!(cfg.scene.texture, Texture::InverseGamma { shape: 3.5 });
        assert_eq!(cfg.scene.calibration, Calibration::Ideal);
        assert_eq!(cfg.multipass.gains, PassGains::Unit);
        assert_eq!(cfg.targets.len(), 2);
        assert_eq!(cfg.targets[1].pass, 1);
        assert_eq!(cfg.targets[1].amplitude, C64::new(0.0, -2.0));
        let cube = cfg.simulate().unwrap();
        assert_eq!(cube.passes(), 2);
        assert_eq!(cube.truth(), cfg.targets.as_slice());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("p = 2\nq = x\nn_bins = 4", 2),
            ("p = 2\nq = 4\nn_bins = 4\nbogus = 1", 4),
            ("p = 2\np = 3\nq = 4\nn_bins = 4", 2),
            ("p = 2\nq = 4\n\nn_bins = 4\ntarget = 9 0.1 1 0", 5),
            ("p = 2\nq = 4\nn_bins = 4\ntexture = weird", 4),
            ("p 2", 1),
        ];
        for (text, want) in cases {
            match parse_config(text) {
                Err(Error::Config { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            parse_config("p = 2\nq = 4"),
            Err(Error::Config { .. })
        ));
        assert!(parse_config("p = 2\nq = 4\nn_bins = 2\nr_b = 5").is_err());
    }
}
